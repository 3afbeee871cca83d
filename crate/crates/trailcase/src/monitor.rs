//! Daily monitoring models: one shared model per monitoring target, trained
//! on the previous window's profiles with machine identifiers excluded, and
//! converted into surprise scores via a log-scale exceedance probability.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sparsefit::{
    explore, fit_pipeline, Blueprint, ColumnKind, EncoderChoice, Explorations, Instructions,
    InteractionChoice, Model, MultiplicativeView, RegChoice, Regularization, TableTransform,
};
use statrs::function::erf::erfc;

use crate::aggregate::Target;
use crate::config::ModelSection;
use crate::error::{EngineError, Result};
use crate::profile::ProfileTable;

/// Probabilities below this are clamped before risk scaling.
pub const P_FLOOR: f64 = 1e-12;
/// Largest assignable risk, `-log10(P_FLOOR)`.
pub const RISK_CAP: f64 = 12.0;
/// Smallest admissible predicted median.
const MEDIAN_FLOOR: f64 = 1e-6;

/// Column names never admitted as model inputs: they identify the machine
/// (or the exact pair) and would let the model memorize per-machine habits.
const IDENTIFIER_COLUMNS: [&str; 2] = ["host", "remote"];

/// One trained model for one monitoring target, valid for scoring any day
/// strictly after its training window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitoringModel {
    pub target: Target,
    /// Last day of the training window.
    pub trained_through: NaiveDate,
    /// Identifier columns removed from the inputs before training.
    pub excluded: Vec<String>,
    /// True when too few rows forced the context-free baseline model.
    pub fallback: bool,
    /// Log-space dispersion of the predicted distribution (robust estimate,
    /// floored).
    pub sigma: f64,
    /// How the configuration search ended, when one ran.
    pub search_outcome: Option<String>,
    pub model: Model,
}

/// One scored observation: how surprising a windowed value is under the
/// day's model, with the explanation needed for evidence reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurpriseScore {
    pub host: String,
    pub target: Target,
    /// Destination for pair-level targets.
    pub remote: Option<String>,
    pub actual: f64,
    pub predicted_median: f64,
    /// Probability of a value at least this extreme.
    pub p: f64,
    /// `-log10` of the (floored) probability, capped.
    pub risk: f64,
    /// Day inside the window contributing most of the actual value; filled
    /// in by the pipeline, which has the daily series.
    #[serde(default)]
    pub peak_day: Option<NaiveDate>,
    /// Baseline-times-factors reading of the prediction.
    pub breakdown: Option<MultiplicativeView<f64>>,
}

/// Deterministic per-model seed, folding the base seed with the training
/// day and target name (FNV-1a).
pub fn model_seed(base: u64, day: NaiveDate, target: Target) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&base.to_le_bytes());
    eat(day.to_string().as_bytes());
    eat(target.name().as_bytes());
    h
}

/// Upper-tail probability of the fitted log-scale family: the chance of a
/// value at least as large as `actual` when the predicted median is
/// `median` with log-space dispersion `sigma`. Zero activity is never
/// surprising.
pub fn exceedance(actual: f64, median: f64, sigma: f64) -> f64 {
    if actual <= 0.0 {
        return 1.0;
    }
    let median = median.max(MEDIAN_FLOOR);
    let z = (actual.ln_1p() - median.ln_1p()) / sigma;
    erfc(z / std::f64::consts::SQRT_2) / 2.0
}

/// Floors and rescales a probability into additive risk units.
pub fn risk_from_p(p: f64) -> f64 {
    (-p.max(P_FLOOR).log10()).clamp(0.0, RISK_CAP)
}

fn build_blueprint(
    table: &sparsefit::Table,
    section: &ModelSection,
) -> Result<Blueprint> {
    let target = table.target().unwrap_or("value").to_string();
    let mut encoders = Vec::new();
    for name in table.names() {
        if *name == target {
            continue;
        }
        let candidates = match table.kind(name).map_err(EngineError::Fit)? {
            ColumnKind::Num => section.numeric_encoders.clone(),
            ColumnKind::Str => section.string_encoders.clone(),
            ColumnKind::Time => continue,
        };
        encoders.push(EncoderChoice {
            column: name.clone(),
            candidates,
        });
    }
    let mut regularizations = Vec::new();
    for lambda in &section.ridge_lambdas {
        regularizations.push(RegChoice {
            family: Regularization::Ridge,
            lambda: *lambda,
        });
    }
    for lambda in &section.lasso_lambdas {
        regularizations.push(RegChoice {
            family: Regularization::Lasso,
            lambda: *lambda,
        });
    }
    Ok(Blueprint {
        transforms: vec![TableTransform::LogTarget],
        encoders,
        interactions: section.interactions.clone(),
        regularizations,
    })
}

/// Trains the shared model for one target from the training window's
/// profiles. Identifier columns are excluded up front; small tables fall
/// back to a context-free baseline (intercept plus dispersion only).
pub fn train_monitoring_model(
    profiles: &ProfileTable,
    section: &ModelSection,
    base_seed: u64,
) -> Result<MonitoringModel> {
    let trained_through = profiles.window.1;
    let seed = model_seed(base_seed, trained_through, profiles.target);
    let mut table = profiles.table.clone();
    let mut excluded = Vec::new();
    for identifier in IDENTIFIER_COLUMNS {
        if table.contains(identifier) {
            table.drop_column(identifier).map_err(EngineError::Fit)?;
            excluded.push(identifier.to_string());
        }
    }

    let fallback = table.rows() < section.min_rows;
    let (model, search_outcome) = if fallback {
        let instructions = Instructions {
            transforms: vec![TableTransform::LogTarget],
            encoders: Vec::new(),
            interaction: InteractionChoice::None,
            regularization: RegChoice {
                family: Regularization::Ridge,
                lambda: section.ridge_lambdas.first().copied().unwrap_or(1e-3),
            },
            tune_fraction: 0.0,
            seed,
            encoder_params: section.encoder_params(),
            ..Instructions::default()
        };
        (fit_pipeline(&table, &instructions)?, None)
    } else {
        let blueprint = build_blueprint(&table, section)?;
        let explorations = Explorations {
            time_tradeoff: section.time_budget_secs,
            tune_fraction: section.tune_fraction,
            seed,
            encoder_params: section.encoder_params(),
            ..Explorations::default()
        };
        let (model, log) = explore(&table, &blueprint, &explorations)?;
        (model, Some(format!("{:?}", log.outcome)))
    };

    let sigma = model.sigma_robust.max(section.sigma_floor);
    Ok(MonitoringModel {
        target: profiles.target,
        trained_through,
        excluded,
        fallback,
        sigma,
        search_outcome,
        model,
    })
}

/// Scores every row of a scored-window profile table under one model.
pub fn score_table(
    model: &MonitoringModel,
    profiles: &ProfileTable,
) -> Result<Vec<SurpriseScore>> {
    if model.target != profiles.target {
        return Err(EngineError::Internal(format!(
            "model for {} cannot score a {} table",
            model.target.name(),
            profiles.target.name()
        )));
    }
    if model.trained_through >= profiles.window.1 {
        return Err(EngineError::Internal(format!(
            "model trained through {} may not score the window ending {}",
            model.trained_through, profiles.window.1
        )));
    }
    let predictions = model.model.predict_table(&profiles.table)?;
    let actuals = profiles.table.target_values().map_err(EngineError::Fit)?;
    let mut out = Vec::with_capacity(predictions.len());
    for ((key, prediction), actual) in profiles.keys.iter().zip(predictions).zip(actuals) {
        let predicted_median = prediction.model_space.exp_m1().max(MEDIAN_FLOOR);
        let p = exceedance(actual, predicted_median, model.sigma);
        out.push(SurpriseScore {
            host: key.host.clone(),
            target: model.target,
            remote: key.remote.clone(),
            actual,
            predicted_median,
            p,
            risk: if actual <= 0.0 { 0.0 } else { risk_from_p(p) },
            peak_day: None,
            breakdown: prediction.multiplicative,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::ProfileKey;
    use sparsefit::Table;

    fn profile_table(
        target: Target,
        window_end: NaiveDate,
        hosts: usize,
        value: impl Fn(usize) -> f64,
        history: impl Fn(usize) -> Option<f64>,
    ) -> ProfileTable {
        let mut table = Table::new();
        let keys: Vec<ProfileKey> = (0..hosts)
            .map(|i| ProfileKey {
                host: format!("h{i:03}"),
                remote: None,
            })
            .collect();
        table
            .add_str("host", keys.iter().map(|k| Some(k.host.clone())).collect())
            .unwrap();
        table
            .add_str(
                "cidr_label",
                (0..hosts).map(|i| Some(if i % 2 == 0 { "users" } else { "services" }.into())).collect(),
            )
            .unwrap();
        table
            .add_num("history", (0..hosts).map(|i| history(i).map(|h| h.ln_1p())).collect())
            .unwrap();
        table
            .add_num("value", (0..hosts).map(|i| Some(value(i))).collect())
            .unwrap();
        table.set_target("value").unwrap();
        ProfileTable {
            target,
            window: (window_end - chrono::Days::new(27), window_end),
            table,
            keys,
            gaps: Vec::new(),
        }
    }

    fn may(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 5, day).unwrap()
    }

    #[test]
    fn seeds_differ_by_day_and_target() {
        let a = model_seed(7, may(20), Target::PtrLookups);
        assert_eq!(a, model_seed(7, may(20), Target::PtrLookups));
        assert_ne!(a, model_seed(7, may(21), Target::PtrLookups));
        assert_ne!(a, model_seed(7, may(20), Target::PortsData));
        assert_ne!(a, model_seed(8, may(20), Target::PtrLookups));
    }

    #[test]
    fn exceedance_matches_the_tail_anchors() {
        // At the median the tail is one half.
        let p_mid = exceedance(11.7e6, 11.7e6, 1.0);
        assert!((p_mid - 0.5).abs() < 1e-12);
        // Zero activity is never surprising.
        assert_eq!(exceedance(0.0, 11.7e6, 1.0), 1.0);
        // One sigma above the median in log space.
        let median: f64 = 11.7e6;
        let one_up = (median.ln_1p() + 1.0).exp_m1();
        let p = exceedance(one_up, median, 1.0);
        assert!((p - 0.158655).abs() < 1e-5);
    }

    #[test]
    fn risk_scaling_floors_and_caps() {
        assert_eq!(risk_from_p(1.0), 0.0);
        assert!((risk_from_p(0.01) - 2.0).abs() < 1e-12);
        assert_eq!(risk_from_p(0.0), RISK_CAP);
        assert_eq!(risk_from_p(1e-15), RISK_CAP);
        // Monotone: smaller p never yields smaller risk.
        let ps = [1.0, 0.3, 0.1, 1e-3, 1e-9, 1e-13];
        for pair in ps.windows(2) {
            assert!(risk_from_p(pair[1]) >= risk_from_p(pair[0]));
        }
    }

    #[test]
    fn small_tables_fall_back_to_a_context_free_model() {
        let section = ModelSection::default();
        let train = profile_table(Target::NeighborsTotal, may(19), 50, |i| 10.0 + (i % 3) as f64, |_| Some(10.0));
        let model = train_monitoring_model(&train, &section, 1).unwrap();
        assert!(model.fallback);
        assert!(model.excluded.contains(&"host".to_string()));
        assert!(model.search_outcome.is_none());
        // Context-free means every row gets the same predicted median.
        let score_day = profile_table(Target::NeighborsTotal, may(20), 50, |i| 10.0 + (i % 3) as f64, |_| Some(10.0));
        let scores = score_table(&model, &score_day).unwrap();
        let first = scores[0].predicted_median;
        assert!(scores.iter().all(|s| (s.predicted_median - first).abs() < 1e-9));
        assert!(first > 9.0 && first < 12.5);
    }

    #[test]
    fn identifiers_never_reach_the_model_inputs() {
        let section = ModelSection::default();
        let train = profile_table(Target::NeighborsTotal, may(19), 400, |i| (i % 7) as f64 + 2.0, |i| Some((i % 7) as f64 + 2.0));
        let model = train_monitoring_model(&train, &section, 1).unwrap();
        assert!(!model.fallback);
        assert_eq!(model.excluded, vec!["host".to_string()]);
        for derivation in &model.model.derivations {
            assert!(!derivation.contains("host"), "identifier leaked: {derivation}");
        }
        for (column, _) in &model.model.instructions.encoders {
            assert_ne!(column, "host");
        }
    }

    #[test]
    fn constant_targets_get_the_sigma_floor_and_exact_prediction() {
        let section = ModelSection::default();
        let train = profile_table(Target::PortsData, may(19), 50, |_| 4.0, |_| None);
        let model = train_monitoring_model(&train, &section, 1).unwrap();
        assert_eq!(model.sigma, section.sigma_floor);
        let scored = profile_table(Target::PortsData, may(20), 50, |_| 4.0, |_| None);
        let scores = score_table(&model, &scored).unwrap();
        for s in &scores {
            assert!((s.predicted_median - 4.0).abs() < 1e-9);
            assert!((s.p - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn surprise_rises_with_the_actual_value() {
        let section = ModelSection::default();
        let train = profile_table(Target::BytesConsumed, may(19), 50, |i| 1e6 + i as f64, |_| None);
        let model = train_monitoring_model(&train, &section, 1).unwrap();
        let mut last_p = 1.1;
        for actual in [0.0, 1e5, 1e6, 3e6, 1e7, 1e9] {
            let scored = profile_table(Target::BytesConsumed, may(20), 50, |_| actual, |_| None);
            let s = &score_table(&model, &scored).unwrap()[0];
            assert!(s.p <= last_p + 1e-15, "p not monotone at {actual}");
            last_p = s.p;
        }
    }

    #[test]
    fn scoring_the_training_day_is_refused() {
        let section = ModelSection::default();
        let train = profile_table(Target::NeighborsTotal, may(19), 20, |_| 5.0, |_| None);
        let model = train_monitoring_model(&train, &section, 1).unwrap();
        let err = score_table(&model, &train).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn context_columns_shift_predictions_when_informative() {
        let section = ModelSection::default();
        // Even rows (users) run hot, odd rows (services) run cold.
        let value = |i: usize| if i.is_multiple_of(2) { 100.0 } else { 10.0 };
        let train = profile_table(Target::NeighborsTotal, may(19), 400, value, |_| None);
        let model = train_monitoring_model(&train, &section, 3).unwrap();
        let scored = profile_table(Target::NeighborsTotal, may(20), 400, value, |_| None);
        let scores = score_table(&model, &scored).unwrap();
        assert!(scores[0].predicted_median > 2.0 * scores[1].predicted_median);
        // The breakdown multiplies out to the prediction exactly.
        let view = scores[0].breakdown.as_ref().unwrap();
        let product: f64 = view.baseline * view.factors.iter().map(|(_, f)| f).product::<f64>();
        assert!((product - view.prediction).abs() <= 1e-9 * view.prediction.abs().max(1.0));
    }
}
