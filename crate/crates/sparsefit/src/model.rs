use serde::{Deserialize, Serialize};

use crate::blueprint::{InteractionChoice, RegChoice};
use crate::encoder::{fit_encoder, Encoder, EncoderKind, EncoderParams};
use crate::linear::{fit_linear, FitOptions, LinearModel, Regularization};
use crate::sparse::{encode, interaction_transform, SparseMatrix, DEFAULT_FEATURE_CAP};
use crate::table::{split_train_tune, Column, ColumnKind, DataTable};
use crate::transform::{apply_table_transform, TableTransform};
use crate::{Error, Scalar};

/// A fully specified modelling experiment: which transforms to apply, how to
/// encode each column, how far to expand interactions, and how to penalize
/// the linear fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instructions {
    pub transforms: Vec<TableTransform>,
    /// `(column, encoder kind)` pairs, applied in order.
    pub encoders: Vec<(String, EncoderKind)>,
    pub interaction: InteractionChoice,
    pub regularization: RegChoice,
    /// Holdout fraction for tuning; `0` fits and evaluates on all rows.
    pub tune_fraction: f64,
    pub seed: u64,
    pub feature_cap: usize,
    pub encoder_params: EncoderParams,
    pub fit: FitOptions,
}

impl Default for Instructions {
    fn default() -> Self {
        Instructions {
            transforms: Vec::new(),
            encoders: Vec::new(),
            interaction: InteractionChoice::None,
            regularization: RegChoice {
                family: Regularization::Ridge,
                lambda: 1e-4,
            },
            tune_fraction: 0.2,
            seed: 0,
            feature_cap: DEFAULT_FEATURE_CAP,
            encoder_params: EncoderParams::default(),
            fit: FitOptions::default(),
        }
    }
}

/// Original-scale contribution of one derived feature to a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct ReasonCode<F> {
    pub derivation: String,
    pub contribution: F,
}

/// Multiplicative reading of a prediction made on a log-transformed target:
/// `baseline * product(factors) == prediction` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct MultiplicativeView<F> {
    pub baseline: F,
    pub factors: Vec<(String, F)>,
    pub prediction: F,
}

/// One scored row: the raw model-space value plus its explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct Prediction<F> {
    pub model_space: F,
    /// Non-zero feature contributions, largest magnitude first.
    pub reasons: Vec<ReasonCode<F>>,
    /// Present when the model was trained on a log target.
    pub multiplicative: Option<MultiplicativeView<F>>,
}

/// A trained pipeline: transforms, fitted encoders, interaction expansion and
/// the penalized linear model, plus holdout diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct FittedModel<F> {
    pub instructions: Instructions,
    pub target: String,
    pub log_target: bool,
    pub encoders: Vec<Encoder<F>>,
    /// Human-readable derivation of every feature column, including
    /// interaction products, aligned with coefficient indices.
    pub derivations: Vec<String>,
    pub linear: LinearModel<F>,
    /// Standard deviation of holdout residuals in model space.
    pub sigma: F,
    /// Outlier-resistant spread of the same residuals: median absolute
    /// deviation scaled by 1.4826 so it estimates a normal sigma.
    pub sigma_robust: F,
    /// Root-mean-square holdout error in model space.
    pub tune_rmse: F,
    pub warnings: Vec<String>,
}

/// Grid location for [`partial_dependence`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub enum GridPoint<F> {
    Num(F),
    Str(String),
}

fn expand<F: Scalar>(
    matrix: SparseMatrix<F>,
    interaction: InteractionChoice,
    cap: usize,
) -> Result<SparseMatrix<F>, Error> {
    match interaction.order() {
        Some(order) => interaction_transform(&matrix, order, cap),
        None => {
            if matrix.width() > cap {
                return Err(Error::FeatureCapExceeded {
                    needed: matrix.width(),
                    cap,
                });
            }
            Ok(matrix)
        }
    }
}

/// Runs one experiment end to end: apply transforms, split off a holdout,
/// fit encoders and the penalized linear model on the training rows, then
/// measure residual spread on the holdout.
///
/// With `tune_fraction == 0` the model is fitted and evaluated on all rows,
/// which is only sensible for tiny tables or externally validated fits.
pub fn fit_pipeline<F: Scalar>(
    table: &DataTable<F>,
    instructions: &Instructions,
) -> Result<FittedModel<F>, Error> {
    let mut working = table.clone();
    for t in &instructions.transforms {
        working = apply_table_transform(&working, t)?;
    }
    let target = working.target().ok_or(Error::NoTarget)?.to_string();
    let log_target = instructions
        .transforms
        .iter()
        .any(|t| matches!(t, TableTransform::LogTarget));

    let (train, tune) = if instructions.tune_fraction > 0.0 {
        let (tr, tu) = split_train_tune(&working, instructions.tune_fraction, instructions.seed)?;
        (tr, Some(tu))
    } else {
        (working, None)
    };

    let y_train = train.target_values()?;
    let mut encoders = Vec::with_capacity(instructions.encoders.len());
    let mut warnings = Vec::new();
    for (column, kind) in &instructions.encoders {
        let col = train.column(column)?;
        let needs_target = matches!(kind, EncoderKind::Tree | EncoderKind::ClusterString);
        let target_slice = if needs_target {
            Some(y_train.as_slice())
        } else {
            None
        };
        let (enc, mut w) = fit_encoder(*kind, column, col, target_slice, &instructions.encoder_params)?;
        warnings.append(&mut w);
        encoders.push(enc);
    }

    let matrix = encode(&train, &encoders)?;
    let mut matrix = expand(matrix, instructions.interaction, instructions.feature_cap)?;
    let lambda = F::from_f64(instructions.regularization.lambda)
        .ok_or(Error::NonFinite { context: "lambda" })?;
    let linear = fit_linear(
        &mut matrix,
        &y_train,
        instructions.regularization.family,
        lambda,
        &instructions.fit,
    )?;
    let derivations = matrix.derivations();

    // Holdout diagnostics (training rows when there is no holdout).
    let (eval_matrix, y_eval) = match &tune {
        Some(tu) => {
            let m = encode(tu, &encoders)?;
            (
                expand(m, instructions.interaction, instructions.feature_cap)?,
                tu.target_values()?,
            )
        }
        None => {
            let m = matrix; // reuse the training design
            (m, y_train)
        }
    };
    let n_eval = F::from_usize(y_eval.len()).unwrap();
    let mut residuals = Vec::with_capacity(y_eval.len());
    let mut sq_sum = F::zero();
    for (i, y) in y_eval.iter().enumerate() {
        let r = linear.predict_row(eval_matrix.row(i)) - *y;
        sq_sum += r * r;
        residuals.push(r);
    }
    let tune_rmse = (sq_sum / n_eval).sqrt();
    let mean_r = residuals.iter().copied().sum::<F>() / n_eval;
    let var = residuals
        .iter()
        .map(|r| (*r - mean_r) * (*r - mean_r))
        .sum::<F>()
        / n_eval;
    let sigma = var.max(F::zero()).sqrt();
    let sigma_robust = mad_sigma(&residuals);

    Ok(FittedModel {
        instructions: instructions.clone(),
        target,
        log_target,
        encoders,
        derivations,
        linear,
        sigma,
        sigma_robust,
        tune_rmse,
        warnings,
    })
}

/// Median absolute deviation from the median, scaled to estimate a normal
/// standard deviation.
fn mad_sigma<F: Scalar>(residuals: &[F]) -> F {
    fn median<F: Scalar>(sorted: &[F]) -> F {
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / F::from_f64(2.0).unwrap()
        }
    }
    if residuals.is_empty() {
        return F::zero();
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&sorted);
    let mut dev: Vec<F> = sorted.iter().map(|r| (*r - med).abs()).collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    median(&dev) * F::from_f64(1.4826).unwrap()
}

impl<F: Scalar> FittedModel<F> {
    /// Scores every row of `table`, which must carry the columns the encoders
    /// were fitted on (the target column is not required).
    pub fn predict_table(&self, table: &DataTable<F>) -> Result<Vec<Prediction<F>>, Error> {
        let mut working = table.clone();
        for t in &self.instructions.transforms {
            // The target is unavailable (and unneeded) at prediction time.
            if matches!(t, TableTransform::LogTarget) {
                continue;
            }
            working = apply_table_transform(&working, t)?;
        }
        let matrix = encode(&working, &self.encoders)?;
        let matrix = expand(matrix, self.instructions.interaction, self.instructions.feature_cap)?;
        Ok((0..matrix.rows())
            .map(|i| self.explain_entries(matrix.row(i)))
            .collect())
    }

    /// Prediction plus explanation for one already-encoded sparse row.
    pub fn explain_entries(&self, entries: &[(u32, F)]) -> Prediction<F> {
        let model_space = self.linear.predict_row(entries);
        let mut reasons: Vec<ReasonCode<F>> = self
            .linear
            .contributions(entries)
            .into_iter()
            .map(|(j, contribution)| ReasonCode {
                derivation: self.derivations[j].clone(),
                contribution,
            })
            .collect();
        reasons.sort_by(|a, b| {
            b.contribution
                .abs()
                .partial_cmp(&a.contribution.abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.derivation.cmp(&b.derivation))
        });
        let multiplicative = if self.log_target {
            Some(MultiplicativeView {
                baseline: self.linear.intercept.exp(),
                factors: reasons
                    .iter()
                    .map(|r| (r.derivation.clone(), r.contribution.exp()))
                    .collect(),
                prediction: model_space.exp(),
            })
        } else {
            None
        };
        Prediction {
            model_space,
            reasons,
            multiplicative,
        }
    }

    /// Looks up the original-scale coefficient of a feature by its
    /// derivation string (e.g. `"bytes"` or `"bytes*bytes"`).
    pub fn coefficient(&self, derivation: &str) -> Option<F> {
        self.derivations
            .iter()
            .position(|d| d == derivation)
            .map(|j| self.linear.coefficients[j])
    }
}

/// Average model-space prediction over `table` with `column` pinned to each
/// grid point in turn — how the model responds to that column in isolation.
pub fn partial_dependence<F: Scalar>(
    model: &FittedModel<F>,
    table: &DataTable<F>,
    column: &str,
    grid: &[GridPoint<F>],
) -> Result<Vec<F>, Error> {
    let kind = table.kind(column)?;
    let rows = table.rows();
    if rows == 0 {
        return Err(Error::TooFewRows { min: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(grid.len());
    for point in grid {
        let pinned: Column<F> = match (point, kind) {
            (GridPoint::Num(v), ColumnKind::Num) => Column::Num(vec![Some(*v); rows]),
            (GridPoint::Str(s), ColumnKind::Str) => Column::Str(vec![Some(s.clone()); rows]),
            (GridPoint::Num(_), _) => {
                return Err(Error::ColumnKind {
                    column: column.to_string(),
                    expected: "numeric",
                    actual: kind.name(),
                })
            }
            (GridPoint::Str(_), _) => {
                return Err(Error::ColumnKind {
                    column: column.to_string(),
                    expected: "string",
                    actual: kind.name(),
                })
            }
        };
        let mut pinned_table = table.clone();
        pinned_table.replace_column(column, pinned)?;
        let preds = model.predict_table(&pinned_table)?;
        let mean = preds.iter().map(|p| p.model_space).sum::<F>() / F::from_usize(rows).unwrap();
        out.push(mean);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::InteractionChoice;

    fn linear_table(n: usize) -> DataTable<f64> {
        let mut t = DataTable::new();
        t.add_num("x", (0..n).map(|i| Some((i % 17) as f64)).collect())
            .unwrap();
        t.add_str(
            "grp",
            (0..n).map(|i| Some(format!("g{}", i % 3))).collect(),
        )
        .unwrap();
        t.add_num(
            "y",
            (0..n)
                .map(|i| Some(5.0 + 2.0 * (i % 17) as f64 + (i % 3) as f64))
                .collect(),
        )
        .unwrap();
        t.set_target("y").unwrap();
        t
    }

    fn plain_instructions() -> Instructions {
        Instructions {
            encoders: vec![
                ("x".to_string(), EncoderKind::Passthrough),
                ("grp".to_string(), EncoderKind::OneHot),
            ],
            regularization: RegChoice {
                family: Regularization::Ridge,
                lambda: 0.0,
            },
            tune_fraction: 0.25,
            ..Instructions::default()
        }
    }

    #[test]
    fn pipeline_learns_additive_signal() {
        let table = linear_table(120);
        let model = fit_pipeline(&table, &plain_instructions()).unwrap();
        assert!(model.linear.converged);
        assert!(model.tune_rmse < 1e-6, "rmse {}", model.tune_rmse);
        assert!(model.sigma < 1e-6);
        let x_coef = model.coefficient("x").unwrap();
        assert!((x_coef - 2.0).abs() < 1e-6);
    }

    #[test]
    fn predictions_carry_sorted_nonzero_reasons() {
        let table = linear_table(120);
        let model = fit_pipeline(&table, &plain_instructions()).unwrap();
        let mut probe = DataTable::new();
        probe.add_num("x", vec![Some(10.0)]).unwrap();
        probe.add_str("grp", vec![Some("g2".to_string())]).unwrap();
        let preds = model.predict_table(&probe).unwrap();
        assert_eq!(preds.len(), 1);
        let p = &preds[0];
        assert!((p.model_space - (5.0 + 20.0 + 2.0)).abs() < 1e-5);
        assert!(!p.reasons.is_empty());
        for pair in p.reasons.windows(2) {
            assert!(pair[0].contribution.abs() >= pair[1].contribution.abs());
        }
        assert!(p.reasons.iter().all(|r| r.contribution != 0.0));
        assert!(p.multiplicative.is_none());
    }

    #[test]
    fn log_target_models_expose_multiplicative_view() {
        let mut t = DataTable::new();
        let n = 200;
        t.add_num("x", (0..n).map(|i| Some((i % 10) as f64)).collect())
            .unwrap();
        t.add_num(
            "y",
            (0..n)
                .map(|i| Some((1.5f64 * (i % 10) as f64).exp_m1()))
                .collect(),
        )
        .unwrap();
        t.set_target("y").unwrap();
        let instructions = Instructions {
            transforms: vec![TableTransform::LogTarget],
            encoders: vec![("x".to_string(), EncoderKind::Passthrough)],
            regularization: RegChoice {
                family: Regularization::Ridge,
                lambda: 0.0,
            },
            ..Instructions::default()
        };
        let model = fit_pipeline(&t, &instructions).unwrap();
        assert!(model.log_target);
        let mut probe = DataTable::new();
        probe.add_num("x", vec![Some(4.0)]).unwrap();
        let p = &model.predict_table(&probe).unwrap()[0];
        let view = p.multiplicative.as_ref().unwrap();
        // The factorization must reproduce the prediction exactly.
        let product: f64 = view.baseline * view.factors.iter().map(|(_, f)| *f).product::<f64>();
        assert!(
            (product - view.prediction).abs() <= 1e-9 * view.prediction.abs().max(1.0),
            "{product} vs {}",
            view.prediction
        );
        assert!((p.model_space - 6.0).abs() < 1e-6);
    }

    #[test]
    fn zero_tune_fraction_fits_on_all_rows() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_num("a", vec![Some(0.0), Some(0.0), Some(1.0), Some(1.0)])
            .unwrap();
        t.add_num("b", vec![Some(0.0), Some(1.0), Some(0.0), Some(1.0)])
            .unwrap();
        t.add_num("y", vec![Some(0.0), Some(1.0), Some(1.0), Some(0.0)])
            .unwrap();
        t.set_target("y").unwrap();
        let instructions = Instructions {
            encoders: vec![
                ("a".to_string(), EncoderKind::Passthrough),
                ("b".to_string(), EncoderKind::Passthrough),
            ],
            interaction: InteractionChoice::Pairs,
            regularization: RegChoice {
                family: Regularization::Ridge,
                lambda: 1e-9,
            },
            tune_fraction: 0.0,
            ..Instructions::default()
        };
        let model = fit_pipeline(&t, &instructions).unwrap();
        assert!(model.tune_rmse < 1e-4, "rmse {}", model.tune_rmse);
        // Ordered products are present as features.
        assert!(model.derivations.iter().any(|d| d == "a*b"));
        assert!(model.derivations.iter().any(|d| d == "b*a"));
        // The ridge limit splits weight evenly across duplicated columns:
        // `a` and `a*a` are identical for binary inputs, as are the two
        // ordered products, so each pair shares its effective coefficient.
        assert!(model.linear.intercept.abs() < 1e-3);
        for d in ["a", "b", "a*a", "b*b"] {
            let c = model.coefficient(d).unwrap();
            assert!((c - 0.5).abs() < 1e-3, "{d}: {c}");
        }
        for d in ["a*b", "b*a"] {
            let c = model.coefficient(d).unwrap();
            assert!((c + 1.0).abs() < 1e-3, "{d}: {c}");
        }
    }

    #[test]
    fn partial_dependence_tracks_a_linear_effect() {
        let table = linear_table(120);
        let model = fit_pipeline(&table, &plain_instructions()).unwrap();
        let grid = [GridPoint::Num(0.0), GridPoint::Num(1.0), GridPoint::Num(5.0)];
        let pd = partial_dependence(&model, &table, "x", &grid).unwrap();
        assert!((pd[1] - pd[0] - 2.0).abs() < 1e-5);
        assert!((pd[2] - pd[0] - 10.0).abs() < 1e-5);
        let bad = partial_dependence(&model, &table, "grp", &[GridPoint::Num(1.0)]);
        assert!(matches!(bad, Err(Error::ColumnKind { .. })));
    }

    #[test]
    fn models_round_trip_through_json() {
        let table = linear_table(60);
        let model = fit_pipeline(&table, &plain_instructions()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: FittedModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        let mut probe = DataTable::new();
        probe.add_num("x", vec![Some(3.0)]).unwrap();
        probe.add_str("grp", vec![Some("g1".to_string())]).unwrap();
        let a = model.predict_table(&probe).unwrap();
        let b = back.predict_table(&probe).unwrap();
        assert_eq!(a[0].model_space, b[0].model_space);
    }

    #[test]
    fn missing_columns_fail_prediction() {
        let table = linear_table(60);
        let model = fit_pipeline(&table, &plain_instructions()).unwrap();
        let mut probe = DataTable::new();
        probe.add_num("x", vec![Some(3.0)]).unwrap();
        assert!(matches!(
            model.predict_table(&probe),
            Err(Error::SchemaDrift { .. })
        ));
    }
}
