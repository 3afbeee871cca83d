use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blueprint::{Blueprint, Explorations, InteractionChoice, RegChoice};
use crate::encoder::EncoderKind;
use crate::model::{fit_pipeline, FittedModel, Instructions};
use crate::table::DataTable;
use crate::{Error, Scalar};

/// One evaluated configuration. Infeasible configurations (feature cap
/// overflow) are logged with an infinite error so they never win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub round: usize,
    pub encoders: Vec<(String, EncoderKind)>,
    pub interaction: InteractionChoice,
    pub regularization: RegChoice,
    pub tune_rmse: f64,
    pub converged: bool,
}

/// Why the search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchOutcome {
    /// Round-over-round improvement fell below the configured threshold.
    Converged,
    /// A full pass proposed nothing that had not already been evaluated.
    Exhausted,
    /// The wall-clock budget ran out.
    TimeBudget,
    /// The round cap was reached first.
    RoundLimit,
}

/// Full trace of a planner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    pub records: Vec<ExperimentRecord>,
    pub outcome: SearchOutcome,
    /// Index into `records` of the winning configuration.
    pub best: usize,
}

/// Position in the search space: one candidate index per encoder slot, plus
/// the interaction and regularization indices.
type Config = (Vec<usize>, usize, usize);

struct Searcher<'a, F: Scalar> {
    table: &'a DataTable<F>,
    blueprint: &'a Blueprint,
    explorations: &'a Explorations,
    cache: BTreeMap<Config, f64>,
    records: Vec<ExperimentRecord>,
    best: Option<(f64, usize, FittedModel<F>)>,
    started: Instant,
}

impl<F: Scalar> Searcher<'_, F> {
    fn instructions_for(&self, cfg: &Config) -> Instructions {
        let (enc_idx, inter, reg) = cfg;
        Instructions {
            transforms: self.blueprint.transforms.clone(),
            encoders: self
                .blueprint
                .encoders
                .iter()
                .zip(enc_idx)
                .map(|(choice, &i)| (choice.column.clone(), choice.candidates[i]))
                .collect(),
            interaction: self.blueprint.interactions[*inter],
            regularization: self.blueprint.regularizations[*reg],
            tune_fraction: self.explorations.tune_fraction,
            seed: self.explorations.seed,
            feature_cap: self.explorations.feature_cap,
            encoder_params: self.explorations.encoder_params.clone(),
            fit: self.explorations.fit.clone(),
        }
    }

    fn over_budget(&self) -> bool {
        self.started.elapsed().as_secs_f64() > self.explorations.time_tradeoff
    }

    /// Fits every configuration not seen before; returns how many were new.
    fn evaluate(&mut self, configs: &[Config], round: usize) -> Result<usize, Error> {
        let fresh: Vec<Config> = configs
            .iter()
            .filter(|c| !self.cache.contains_key(*c))
            .cloned()
            .collect();
        let fits: Vec<(Config, Result<FittedModel<F>, Error>)> = fresh
            .par_iter()
            .map(|c| (c.clone(), fit_pipeline(self.table, &self.instructions_for(c))))
            .collect();
        let count = fits.len();
        for (cfg, res) in fits {
            let instructions = self.instructions_for(&cfg);
            let record_idx = self.records.len();
            match res {
                Ok(model) => {
                    let rmse = model.tune_rmse.to_f64().unwrap_or(f64::INFINITY);
                    self.records.push(ExperimentRecord {
                        round,
                        encoders: instructions.encoders,
                        interaction: instructions.interaction,
                        regularization: instructions.regularization,
                        tune_rmse: rmse,
                        converged: model.linear.converged,
                    });
                    self.cache.insert(cfg, rmse);
                    let improves = self.best.as_ref().is_none_or(|(b, _, _)| rmse < *b);
                    if improves {
                        self.best = Some((rmse, record_idx, model));
                    }
                }
                Err(Error::FeatureCapExceeded { .. }) => {
                    self.records.push(ExperimentRecord {
                        round,
                        encoders: instructions.encoders,
                        interaction: instructions.interaction,
                        regularization: instructions.regularization,
                        tune_rmse: f64::INFINITY,
                        converged: false,
                    });
                    self.cache.insert(cfg, f64::INFINITY);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(count)
    }

    fn cached(&self, cfg: &Config) -> f64 {
        *self.cache.get(cfg).unwrap_or(&f64::INFINITY)
    }
}

/// Searches the blueprint by coordinate descent and returns the best model
/// found together with the full experiment log.
///
/// The search fits a quick first model (the leading candidate of every
/// dimension), then sweeps one dimension at a time — each encoder slot, the
/// interaction depth, the regularization point — keeping the best value
/// before moving on. It stops when a round improves the best holdout error
/// by at most `min_round_improvement` (relative), when a round proposes no
/// new configuration, or when the time budget or round cap is hit. Ties are
/// broken toward the earlier candidate, so runs are reproducible.
pub fn explore<F: Scalar>(
    table: &DataTable<F>,
    blueprint: &Blueprint,
    explorations: &Explorations,
) -> Result<(FittedModel<F>, SearchLog), Error> {
    blueprint.validate()?;
    if explorations.max_rounds == 0 {
        return Err(Error::InvalidParam("max_rounds must be at least 1".into()));
    }
    let mut searcher = Searcher {
        table,
        blueprint,
        explorations,
        cache: BTreeMap::new(),
        records: Vec::new(),
        best: None,
        started: Instant::now(),
    };

    let n_enc = blueprint.encoders.len();
    let mut current: Config = (vec![0; n_enc], 0, 0);
    searcher.evaluate(std::slice::from_ref(&current), 0)?;

    let mut outcome = SearchOutcome::RoundLimit;
    'rounds: for round in 1..=explorations.max_rounds {
        let start_best = searcher.best.as_ref().map_or(f64::INFINITY, |(b, _, _)| *b);
        let mut new_this_round = 0;
        // dims: encoder slots, then interaction, then regularization
        for dim in 0..n_enc + 2 {
            if searcher.over_budget() {
                outcome = SearchOutcome::TimeBudget;
                break 'rounds;
            }
            let n_candidates = if dim < n_enc {
                blueprint.encoders[dim].candidates.len()
            } else if dim == n_enc {
                blueprint.interactions.len()
            } else {
                blueprint.regularizations.len()
            };
            let candidates: Vec<Config> = (0..n_candidates)
                .map(|i| {
                    let mut cfg = current.clone();
                    if dim < n_enc {
                        cfg.0[dim] = i;
                    } else if dim == n_enc {
                        cfg.1 = i;
                    } else {
                        cfg.2 = i;
                    }
                    cfg
                })
                .collect();
            new_this_round += searcher.evaluate(&candidates, round)?;
            let mut winner = 0usize;
            let mut winner_rmse = searcher.cached(&candidates[0]);
            for (i, cfg) in candidates.iter().enumerate().skip(1) {
                let rmse = searcher.cached(cfg);
                if rmse < winner_rmse {
                    winner = i;
                    winner_rmse = rmse;
                }
            }
            current = candidates[winner].clone();
        }
        if new_this_round == 0 {
            outcome = SearchOutcome::Exhausted;
            break;
        }
        let end_best = searcher.best.as_ref().map_or(f64::INFINITY, |(b, _, _)| *b);
        if start_best.is_finite() {
            let improvement = (start_best - end_best) / start_best.max(f64::MIN_POSITIVE);
            if improvement <= explorations.min_round_improvement {
                outcome = SearchOutcome::Converged;
                break;
            }
        }
    }

    let (_, best_idx, model) = searcher.best.ok_or(Error::EmptySearchSpace)?;
    Ok((
        model,
        SearchLog {
            records: searcher.records,
            outcome,
            best: best_idx,
        },
    ))
}
