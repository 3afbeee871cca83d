//! Engine configuration: one human-editable file declaring machine identity,
//! log sources, aggregation policy, modelling choices, risk-combination
//! weights, and case-linking thresholds.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sparsefit::{EncoderKind, EncoderParams, InteractionChoice};

use crate::aggregate::{PortGroupPolicy, Target};
use crate::error::{EngineError, Result};
use crate::identity::{Cidr, IdentityMap};
use crate::ingest::{required_fields, FieldKind, SourceKind, SourceSpec};

/// Run-wide settings.
#[derive(Debug, Clone)]
pub struct EngineSection {
    pub seed: u64,
    /// Days per scored window.
    pub window_days: u32,
    /// Days of preceding history feeding context columns.
    pub history_days: u32,
    /// Root directory of the results store.
    pub results: PathBuf,
}

/// Modelling settings shared by every monitoring target.
#[derive(Debug, Clone)]
pub struct ModelSection {
    /// Below this many training rows the model falls back to a context-free
    /// baseline (intercept plus spread).
    pub min_rows: usize,
    /// Smallest admissible log-space spread.
    pub sigma_floor: f64,
    pub tune_fraction: f64,
    pub numeric_encoders: Vec<EncoderKind>,
    pub string_encoders: Vec<EncoderKind>,
    pub interactions: Vec<InteractionChoice>,
    pub ridge_lambdas: Vec<f64>,
    pub lasso_lambdas: Vec<f64>,
    pub bins: usize,
    /// Smallest machine pool a cluster-derived feature may reflect.
    pub cluster_min_samples: usize,
    /// Wall-clock budget per model search, seconds.
    pub time_budget_secs: f64,
    /// Destinations contacted by at least this many machines get
    /// peer-group context columns.
    pub min_clients: usize,
    /// History context requires activity on at least this fraction of
    /// history days...
    pub min_active_fraction: f64,
    /// ...with day-to-day coefficient of variation at most this.
    pub max_cv: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let mut diagnostics = Vec::new();
        let section = build_model(
            &RawModel::default(),
            &mut Check {
                diagnostics: &mut diagnostics,
            },
        );
        debug_assert!(diagnostics.is_empty());
        section
    }
}

impl ModelSection {
    pub fn encoder_params(&self) -> EncoderParams {
        EncoderParams {
            bins: self.bins,
            cluster_min_samples: self.cluster_min_samples,
            ..EncoderParams::default()
        }
    }
}

/// Per-stage risk combination weights.
#[derive(Debug, Clone)]
pub struct ComboSection {
    /// Weight per monitoring target (level 1).
    pub weights: BTreeMap<Target, f64>,
    /// Uniform destination-level weight (level 2).
    pub destination_weight: f64,
}

impl ComboSection {
    pub fn weight(&self, target: Target) -> f64 {
        self.weights.get(&target).copied().unwrap_or(1.0)
    }
}

/// Association-graph and case thresholds.
#[derive(Debug, Clone)]
pub struct LinkSection {
    /// A data movement becomes a graph edge at this sub-risk.
    pub edge_threshold: f64,
    /// Absolute stage risk for the high band.
    pub high_risk: f64,
    /// Absolute stage risk for the medium band.
    pub medium_risk: f64,
    /// Rank fraction for the high band.
    pub high_fraction: f64,
    /// Rank fraction for the medium band.
    pub medium_fraction: f64,
    /// How many top-ranked hosts seed candidate cases.
    pub seed_count: usize,
    /// Scores below this are omitted from case evidence (unless a member
    /// would otherwise have none).
    pub evidence_floor: f64,
}

/// Fully validated engine configuration with the identity map loaded.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub engine: EngineSection,
    pub internal_cidrs: Vec<Cidr>,
    pub cidr_labels: Vec<(Cidr, String)>,
    pub identity: IdentityMap,
    pub ports: PortGroupPolicy,
    pub sources: Vec<SourceSpec>,
    pub model: ModelSection,
    pub combo: ComboSection,
    pub link: LinkSection,
}

// ---------------------------------------------------------------------------
// Raw file shape.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    engine: RawEngine,
    identity: RawIdentity,
    #[serde(default)]
    cidr_labels: BTreeMap<String, String>,
    #[serde(default)]
    ports: RawPorts,
    #[serde(default, rename = "source")]
    sources: Vec<RawSource>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    combo: RawCombo,
    #[serde(default)]
    link: RawLink,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEngine {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_window")]
    window_days: u32,
    #[serde(default = "default_window")]
    history_days: u32,
    #[serde(default = "default_results")]
    results: PathBuf,
}

fn default_window() -> u32 {
    28
}

fn default_results() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIdentity {
    /// Lease table path; empty to run without one (names fall back to
    /// literal addresses).
    #[serde(default)]
    map: String,
    internal_cidrs: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPorts {
    #[serde(default)]
    data: Vec<u16>,
    #[serde(default)]
    service: Vec<u16>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: String,
    path: String,
    /// `name:kind` pairs, e.g. `"timestamp:timestamp"`, `"src:ip-address"`.
    columns: Vec<String>,
    #[serde(default = "default_delimiter")]
    delimiter: String,
}

fn default_delimiter() -> String {
    ",".into()
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawModel {
    min_rows: usize,
    sigma_floor: f64,
    tune_fraction: f64,
    numeric_encoders: Vec<String>,
    string_encoders: Vec<String>,
    interactions: Vec<String>,
    ridge_lambdas: Vec<f64>,
    lasso_lambdas: Vec<f64>,
    bins: usize,
    cluster_min_samples: usize,
    time_budget_secs: f64,
    min_clients: usize,
    min_active_fraction: f64,
    max_cv: f64,
}

impl Default for RawModel {
    fn default() -> Self {
        RawModel {
            min_rows: 200,
            sigma_floor: 0.05,
            tune_fraction: 0.2,
            numeric_encoders: vec!["passthrough".into(), "quantile-bins".into()],
            string_encoders: vec!["one-hot".into()],
            interactions: vec!["none".into()],
            ridge_lambdas: vec![1e-3, 1e-1],
            lasso_lambdas: Vec::new(),
            bins: 16,
            cluster_min_samples: 8,
            time_budget_secs: 20.0,
            min_clients: 10,
            min_active_fraction: 0.8,
            max_cv: 0.5,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCombo {
    #[serde(default)]
    weights: BTreeMap<String, f64>,
    #[serde(default)]
    destination_weight: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawLink {
    edge_threshold: f64,
    high_risk: f64,
    medium_risk: f64,
    high_fraction: f64,
    medium_fraction: f64,
    seed_count: usize,
    evidence_floor: f64,
}

impl Default for RawLink {
    fn default() -> Self {
        RawLink {
            edge_threshold: 6.0,
            high_risk: 6.0,
            medium_risk: 3.0,
            high_fraction: 0.01,
            medium_fraction: 0.05,
            seed_count: 50,
            evidence_floor: 3.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Validation.

fn parse_encoder(name: &str) -> Option<EncoderKind> {
    match name {
        "passthrough" => Some(EncoderKind::Passthrough),
        "quantile-bins" => Some(EncoderKind::QuantileBins),
        "tree" => Some(EncoderKind::Tree),
        "one-hot" => Some(EncoderKind::OneHot),
        "cluster-string" => Some(EncoderKind::ClusterString),
        _ => None,
    }
}

fn parse_interaction(name: &str) -> Option<InteractionChoice> {
    match name {
        "none" => Some(InteractionChoice::None),
        "pairs" => Some(InteractionChoice::Pairs),
        "triples" => Some(InteractionChoice::Triples),
        _ => None,
    }
}

struct Check<'a> {
    diagnostics: &'a mut Vec<String>,
}

impl Check<'_> {
    fn expect(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.diagnostics.push(message());
        }
    }
}

impl EngineConfig {
    /// Loads, validates, and resolves a configuration file. Every diagnostic
    /// is fatal here; use [`EngineConfig::diagnose`] to collect them all.
    pub fn load(path: &Path) -> Result<EngineConfig> {
        let mut diagnostics = Vec::new();
        let config = EngineConfig::diagnose(path, &mut diagnostics)?;
        match config {
            Some(config) if diagnostics.is_empty() => Ok(config),
            _ => Err(EngineError::ConfigFile {
                path: path.to_path_buf(),
                message: diagnostics.join("; "),
            }),
        }
    }

    /// Parses the file and collects every diagnostic. Returns the built
    /// configuration when the problems were non-structural (the caller
    /// decides whether diagnostics are fatal). Unreadable or unparseable
    /// files are errors, not diagnostics.
    pub fn diagnose(path: &Path, diagnostics: &mut Vec<String>) -> Result<Option<EngineConfig>> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let raw: RawConfig = toml::from_str(&text).map_err(|e| EngineError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(build(raw, &base, diagnostics))
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build(raw: RawConfig, base: &Path, diagnostics: &mut Vec<String>) -> Option<EngineConfig> {
    let mut check = Check { diagnostics };

    check.expect(raw.engine.window_days >= 1, || {
        "engine.window_days must be at least 1".into()
    });
    check.expect(raw.engine.history_days >= 1, || {
        "engine.history_days must be at least 1".into()
    });

    let mut internal_cidrs = Vec::new();
    check.expect(!raw.identity.internal_cidrs.is_empty(), || {
        "identity.internal_cidrs must list at least one network".into()
    });
    for text in &raw.identity.internal_cidrs {
        match Cidr::parse(text) {
            Ok(c) => internal_cidrs.push(c),
            Err(e) => check.expect(false, || format!("identity.internal_cidrs: {e}")),
        }
    }

    let mut cidr_labels = Vec::new();
    for (cidr_text, label) in &raw.cidr_labels {
        match Cidr::parse(cidr_text) {
            Ok(c) => cidr_labels.push((c, label.clone())),
            Err(e) => check.expect(false, || format!("cidr_labels: {e}")),
        }
    }

    let identity = if raw.identity.map.is_empty() {
        IdentityMap::default()
    } else {
        match IdentityMap::load(&resolve(base, &raw.identity.map)) {
            Ok(map) => map,
            Err(e) => {
                check.expect(false, || format!("identity.map: {e}"));
                IdentityMap::default()
            }
        }
    };

    let ports = match PortGroupPolicy::new(
        raw.ports.data.iter().copied().collect(),
        raw.ports.service.iter().copied().collect(),
    ) {
        Ok(p) => p,
        Err(e) => {
            check.expect(false, || format!("ports: {e}"));
            PortGroupPolicy::default()
        }
    };

    let mut sources = Vec::new();
    check.expect(!raw.sources.is_empty(), || {
        "at least one [[source]] block is required".into()
    });
    for (i, s) in raw.sources.iter().enumerate() {
        if let Some(spec) = build_source(s, base, i, &mut check) {
            sources.push(spec);
        }
    }

    let model = build_model(&raw.model, &mut check);

    let mut weights = BTreeMap::new();
    for (name, w) in &raw.combo.weights {
        match Target::parse(name) {
            Some(t) => {
                check.expect(*w >= 0.0, || {
                    format!("combo.weights.{name} must not be negative (got {w})")
                });
                weights.insert(t, *w);
            }
            None => check.expect(false, || {
                format!("combo.weights names unknown monitoring target '{name}'")
            }),
        }
    }
    for t in Target::ALL {
        weights.entry(t).or_insert(1.0);
    }
    check.expect(weights.values().any(|w| *w > 0.0), || {
        "combo.weights must include at least one positive weight".into()
    });
    let destination_weight = raw.combo.destination_weight.unwrap_or(1.0);
    check.expect(destination_weight >= 0.0, || {
        "combo.destination_weight must not be negative".into()
    });

    let link = LinkSection {
        edge_threshold: raw.link.edge_threshold,
        high_risk: raw.link.high_risk,
        medium_risk: raw.link.medium_risk,
        high_fraction: raw.link.high_fraction,
        medium_fraction: raw.link.medium_fraction,
        seed_count: raw.link.seed_count,
        evidence_floor: raw.link.evidence_floor,
    };
    check.expect(link.edge_threshold >= 0.0, || {
        "link.edge_threshold must not be negative".into()
    });
    check.expect(link.medium_risk <= link.high_risk, || {
        "link.medium_risk must not exceed link.high_risk".into()
    });
    for (name, f) in [
        ("high_fraction", link.high_fraction),
        ("medium_fraction", link.medium_fraction),
    ] {
        check.expect((0.0..=1.0).contains(&f), || {
            format!("link.{name} must lie in [0, 1]")
        });
    }
    check.expect(link.seed_count >= 1, || {
        "link.seed_count must be at least 1".into()
    });
    check.expect(link.evidence_floor >= 0.0, || {
        "link.evidence_floor must not be negative".into()
    });

    Some(EngineConfig {
        engine: EngineSection {
            seed: raw.engine.seed,
            window_days: raw.engine.window_days,
            history_days: raw.engine.history_days,
            results: resolve(base, &raw.engine.results.to_string_lossy()),
        },
        internal_cidrs,
        cidr_labels,
        identity,
        ports,
        sources,
        model,
        combo: ComboSection {
            weights,
            destination_weight,
        },
        link,
    })
}

fn build_source(
    raw: &RawSource,
    base: &Path,
    index: usize,
    check: &mut Check<'_>,
) -> Option<SourceSpec> {
    let label = format!("source[{index}]");
    let kind = match raw.kind.as_str() {
        "flow" => SourceKind::Flow,
        "dns" => SourceKind::Dns,
        "proxy" => SourceKind::Proxy,
        other => {
            check.expect(false, || {
                format!("{label}: unknown kind '{other}' (expected flow, dns, or proxy)")
            });
            return None;
        }
    };
    let mut delim_chars = raw.delimiter.chars();
    let delimiter = match (delim_chars.next(), delim_chars.next()) {
        (Some(c), None) => c,
        _ => {
            check.expect(false, || {
                format!("{label}: delimiter must be a single character")
            });
            ','
        }
    };
    let mut schema = Vec::new();
    let mut seen = BTreeSet::new();
    for column in &raw.columns {
        let Some((name, kind_name)) = column.split_once(':') else {
            check.expect(false, || {
                format!("{label}: column '{column}' is not in name:kind form")
            });
            continue;
        };
        let Some(field_kind) = FieldKind::parse(kind_name) else {
            check.expect(false, || {
                format!("{label}: column '{name}' has unknown kind '{kind_name}'")
            });
            continue;
        };
        check.expect(seen.insert(name.to_string()), || {
            format!("{label}: column '{name}' declared twice")
        });
        schema.push((name.to_string(), field_kind));
    }
    for (field, want) in required_fields(kind) {
        match schema.iter().find(|(name, _)| name == field) {
            Some((_, got)) if got == want => {}
            Some(_) => check.expect(false, || {
                format!("{label}: column '{field}' has the wrong kind for a {} source", kind.name())
            }),
            None => check.expect(false, || {
                format!("{label}: {} sources require a '{field}' column", kind.name())
            }),
        }
    }
    Some(SourceSpec {
        kind,
        root: resolve(base, &raw.path),
        schema,
        delimiter,
    })
}

fn build_model(raw: &RawModel, check: &mut Check<'_>) -> ModelSection {
    let mut parse_encoders = |names: &[String], field: &str| {
        let mut out = Vec::new();
        for name in names {
            match parse_encoder(name) {
                Some(kind) => out.push(kind),
                None => check.expect(false, || {
                    format!("model.{field}: unknown encoder '{name}'")
                }),
            }
        }
        out
    };
    let numeric_encoders = parse_encoders(&raw.numeric_encoders, "numeric_encoders");
    let string_encoders = parse_encoders(&raw.string_encoders, "string_encoders");
    let mut interactions = Vec::new();
    for name in &raw.interactions {
        match parse_interaction(name) {
            Some(choice) => interactions.push(choice),
            None => check.expect(false, || {
                format!("model.interactions: unknown choice '{name}'")
            }),
        }
    }
    check.expect(!numeric_encoders.is_empty(), || {
        "model.numeric_encoders must list at least one encoder".into()
    });
    check.expect(!string_encoders.is_empty(), || {
        "model.string_encoders must list at least one encoder".into()
    });
    if interactions.is_empty() {
        interactions.push(InteractionChoice::None);
    }
    check.expect(raw.sigma_floor > 0.0, || {
        "model.sigma_floor must be positive".into()
    });
    check.expect((0.0..1.0).contains(&raw.tune_fraction), || {
        "model.tune_fraction must lie in [0, 1)".into()
    });
    check.expect(raw.bins >= 2, || "model.bins must be at least 2".into());
    check.expect(
        raw.ridge_lambdas.iter().chain(&raw.lasso_lambdas).all(|l| *l >= 0.0),
        || "model penalty strengths must not be negative".into(),
    );
    check.expect(!raw.ridge_lambdas.is_empty() || !raw.lasso_lambdas.is_empty(), || {
        "model needs at least one ridge or lasso penalty strength".into()
    });
    check.expect(raw.min_clients >= 2, || {
        "model.min_clients must be at least 2".into()
    });
    check.expect(
        raw.min_active_fraction > 0.0 && raw.min_active_fraction <= 1.0,
        || "model.min_active_fraction must lie in (0, 1]".into(),
    );
    check.expect(raw.max_cv > 0.0, || "model.max_cv must be positive".into());
    check.expect(raw.time_budget_secs > 0.0, || {
        "model.time_budget_secs must be positive".into()
    });
    ModelSection {
        min_rows: raw.min_rows,
        sigma_floor: raw.sigma_floor,
        tune_fraction: raw.tune_fraction,
        numeric_encoders,
        string_encoders,
        interactions,
        ridge_lambdas: raw.ridge_lambdas.clone(),
        lasso_lambdas: raw.lasso_lambdas.clone(),
        bins: raw.bins,
        cluster_min_samples: raw.cluster_min_samples,
        time_budget_secs: raw.time_budget_secs,
        min_clients: raw.min_clients,
        min_active_fraction: raw.min_active_fraction,
        max_cv: raw.max_cv,
    }
}
