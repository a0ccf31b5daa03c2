//! Experiment and grid orchestration: load the four embedding spaces per
//! experiment, compute every metric with one shared options record, and
//! aggregate grid-level correlation analyses.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster_metrics::silhouette_score;
use crate::corpus_io::{load_embedding_set, EmbeddingSet, Role};
use crate::geometry::{l2_normalize, pairwise_divergence, Metric};
use crate::stats;
use crate::svg::render_scatter;
use crate::topo::{compare_all_spaces, SpaceComparison, TopoOptions};
use crate::tsne::{coords_csv, tsne, TsneConfig};
use crate::zeroshot::{evaluate, ZeroShotReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("experiment {name}: {message}")]
    Experiment { name: String, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingCondition {
    Dirty,
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainingCondition {
    Dirty,
    Clean,
    None,
}

/// Matrix + manifest path pair for one role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathPair {
    pub matrix: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolePaths {
    pub x_a: PathPair,
    #[serde(rename = "E_a")]
    pub e_a: PathPair,
    pub x_t: PathPair,
    #[serde(rename = "E_t")]
    pub e_t: PathPair,
}

/// One training×pretraining condition and where its exported embeddings live.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub training_condition: TrainingCondition,
    pub pretraining_condition: PretrainingCondition,
    /// May be omitted only when a metrics override supplies this experiment.
    #[serde(default)]
    pub paths: Option<RolePaths>,
}

/// Options shared by every experiment in a grid run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub metric: Metric,
    pub k_max: Option<usize>,
    pub include_self: bool,
    pub full_clouds_unimodal: bool,
    pub seed: u64,
    pub tsne: TsneConfig,
    pub skip_tsne: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            metric: Metric::CosineDivergence,
            k_max: None,
            include_self: false,
            full_clouds_unimodal: false,
            seed: 0,
            tsne: TsneConfig::default(),
            skip_tsne: false,
        }
    }
}

impl AnalysisOptions {
    fn topo_options(&self) -> TopoOptions {
        TopoOptions {
            metric: self.metric,
            k_range: self.k_max.map(|k_max| (1, k_max)),
            include_self: self.include_self,
            full_clouds_unimodal: self.full_clouds_unimodal,
        }
    }

    fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            seed: self.seed,
            input_metric: self.metric,
            ..self.tsne.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default)]
    pub options: AnalysisOptions,
    /// JSON file mapping experiment name → published metric values; entries
    /// here bypass loading and computation for that experiment.
    #[serde(default)]
    pub metrics_override: Option<PathBuf>,
}

impl GridConfig {
    /// Reads a grid config from TOML or JSON, detected by content.
    pub fn from_path(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path)?;
        let trimmed = text.trim_start();
        let config: GridConfig = if trimmed.starts_with('{') {
            serde_json::from_str(&text).map_err(|e| ReportError::Serialization(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| ReportError::Serialization(e.to_string()))?
        };
        if config.experiments.is_empty() {
            return Err(ReportError::InvalidConfig("no experiments".into()));
        }
        Ok(config)
    }
}

/// Published or externally computed metric values for one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsOverride {
    pub accuracy: f64,
    pub silhouette_x_a: Option<f64>,
    pub silhouette_e_a: Option<f64>,
    pub topo_xa_vs_ea: Option<f64>,
    pub topo_xt_vs_et: Option<f64>,
    pub topo_ea_vs_et: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OverrideFile {
    #[serde(default)]
    pub random_guess: Option<f64>,
    pub experiments: BTreeMap<String, MetricsOverride>,
}

/// Per-experiment results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub training_condition: TrainingCondition,
    pub pretraining_condition: PretrainingCondition,
    pub accuracy: f64,
    /// Silhouette per space, keys `x_a` and `E_a`.
    pub silhouettes: BTreeMap<String, f64>,
    /// s_max per comparison, keys `x_a_vs_E_a`, `x_t_vs_E_t`, `E_a_vs_E_t`.
    pub topo: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<ZeroShotReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topo_detail: Option<SpaceComparison>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tsne_outputs: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub x_description: String,
    pub y_description: String,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub options: AnalysisOptions,
    pub experiments: Vec<MetricsReport>,
    pub failures: Vec<ExperimentFailure>,
    pub correlations: Vec<CorrelationEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_guess: Option<f64>,
}

fn wrap<E: std::fmt::Display>(name: &str) -> impl Fn(E) -> ReportError + '_ {
    move |e| ReportError::Experiment {
        name: name.to_string(),
        message: e.to_string(),
    }
}

/// Loads the four spaces of one experiment and computes every metric.
pub fn run_experiment(
    spec: &ExperimentSpec,
    options: &AnalysisOptions,
    out_dir: Option<&Path>,
) -> Result<MetricsReport, ReportError> {
    let name = spec.name.as_str();
    let paths = spec.paths.as_ref().ok_or_else(|| ReportError::Experiment {
        name: name.to_string(),
        message: "no paths configured and no metrics override supplied".into(),
    })?;

    let load = |pair: &PathPair, role: Role| -> Result<EmbeddingSet<f64>, ReportError> {
        let set = load_embedding_set(&pair.matrix, &pair.manifest, role).map_err(wrap(name))?;
        if role.is_cross_modal() {
            l2_normalize(&set).map_err(wrap(name))
        } else {
            Ok(set)
        }
    };
    let x_a = load(&paths.x_a, Role::AudioUnimodal)?;
    let e_a = load(&paths.e_a, Role::AudioCrossModal)?;
    let x_t = load(&paths.x_t, Role::TextUnimodal)?;
    let e_t = load(&paths.e_t, Role::TextCrossModal)?;

    let zero_shot = evaluate(&e_a, &e_t).map_err(wrap(name))?;

    let mut silhouettes = BTreeMap::new();
    for (key, set) in [("x_a", &x_a), ("E_a", &e_a)] {
        let dm = pairwise_divergence(set, options.metric).map_err(wrap(name))?;
        let labels = set.labels.as_ref().ok_or_else(|| ReportError::Experiment {
            name: name.to_string(),
            message: format!("{key} has no labels"),
        })?;
        let score = silhouette_score(&dm, labels).map_err(wrap(name))?;
        silhouettes.insert(key.to_string(), score);
    }

    let comparison =
        compare_all_spaces(&x_a, &e_a, &x_t, &e_t, &options.topo_options()).map_err(wrap(name))?;
    let mut topo = BTreeMap::new();
    topo.insert("x_a_vs_E_a".to_string(), comparison.xa_vs_ea.s_max);
    topo.insert("x_t_vs_E_t".to_string(), comparison.xt_vs_et.s_max);
    topo.insert("E_a_vs_E_t".to_string(), comparison.ea_vs_et.s_max);

    let mut tsne_outputs = BTreeMap::new();
    if !options.skip_tsne {
        let out_dir = out_dir.ok_or_else(|| ReportError::Experiment {
            name: name.to_string(),
            message: "t-SNE rendering requested but no output directory given".into(),
        })?;
        std::fs::create_dir_all(out_dir)?;
        let config = options.tsne_config();
        for (role_name, set) in [("x_a", &x_a), ("E_a", &e_a), ("x_t", &x_t), ("E_t", &e_t)] {
            let result = tsne(set, &config).map_err(wrap(name))?;
            let svg_path = out_dir.join(format!("{name}_{role_name}_tsne.svg"));
            let labels = set.labels.clone().unwrap_or_default();
            render_scatter(&result.coords, &labels, &svg_path)?;
            let csv_path = out_dir.join(format!("{name}_{role_name}_tsne.csv"));
            std::fs::write(
                &csv_path,
                coords_csv(&result, &set.ids, set.labels.as_deref()),
            )?;
            tsne_outputs.insert(role_name.to_string(), svg_path);
        }
    }

    Ok(MetricsReport {
        name: name.to_string(),
        training_condition: spec.training_condition,
        pretraining_condition: spec.pretraining_condition,
        accuracy: zero_shot.accuracy,
        silhouettes,
        topo,
        zero_shot: Some(zero_shot),
        topo_detail: Some(comparison),
        tsne_outputs,
    })
}

fn report_from_override(spec: &ExperimentSpec, values: &MetricsOverride) -> MetricsReport {
    let mut silhouettes = BTreeMap::new();
    if let Some(v) = values.silhouette_x_a {
        silhouettes.insert("x_a".to_string(), v);
    }
    if let Some(v) = values.silhouette_e_a {
        silhouettes.insert("E_a".to_string(), v);
    }
    let mut topo = BTreeMap::new();
    if let Some(v) = values.topo_xa_vs_ea {
        topo.insert("x_a_vs_E_a".to_string(), v);
    }
    if let Some(v) = values.topo_xt_vs_et {
        topo.insert("x_t_vs_E_t".to_string(), v);
    }
    if let Some(v) = values.topo_ea_vs_et {
        topo.insert("E_a_vs_E_t".to_string(), v);
    }
    MetricsReport {
        name: spec.name.clone(),
        training_condition: spec.training_condition,
        pretraining_condition: spec.pretraining_condition,
        accuracy: values.accuracy,
        silhouettes,
        topo,
        zero_shot: None,
        topo_detail: None,
        tsne_outputs: BTreeMap::new(),
    }
}

/// Runs every experiment in config order. Failed experiments are recorded and
/// the rest continue; correlations are computed over successes only and
/// skipped below 3.
pub fn run_grid(config: &GridConfig, out_dir: Option<&Path>) -> Result<GridReport, ReportError> {
    let overrides: OverrideFile = match &config.metrics_override {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| ReportError::Serialization(e.to_string()))?
        }
        None => OverrideFile::default(),
    };

    let mut experiments = Vec::new();
    let mut failures = Vec::new();
    for spec in &config.experiments {
        if let Some(values) = overrides.experiments.get(&spec.name) {
            experiments.push(report_from_override(spec, values));
            continue;
        }
        match run_experiment(spec, &config.options, out_dir) {
            Ok(report) => experiments.push(report),
            Err(e) => failures.push(ExperimentFailure {
                name: spec.name.clone(),
                error: e.to_string(),
            }),
        }
    }

    let correlations = grid_correlations(&experiments);
    let random_guess = overrides.random_guess.or_else(|| {
        experiments
            .iter()
            .find_map(|e| e.zero_shot.as_ref())
            .map(|z| 1.0 / z.class_order.len() as f64)
    });

    Ok(GridReport {
        options: config.options.clone(),
        experiments,
        failures,
        correlations,
        random_guess,
    })
}

fn grid_correlations(experiments: &[MetricsReport]) -> Vec<CorrelationEntry> {
    let mut out = Vec::new();
    let entry = |x_description: &str,
                 y_description: &str,
                 pairs: Vec<(f64, f64)>|
     -> Option<CorrelationEntry> {
        if pairs.len() < 3 {
            return None;
        }
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let rho = stats::pearson(&xs, &ys).ok()?;
        let p_value = stats::pearson_p_value(rho, xs.len()).ok()?;
        Some(CorrelationEntry {
            x_description: x_description.to_string(),
            y_description: y_description.to_string(),
            rho,
            p_value,
            n: xs.len(),
        })
    };

    let sil_pairs: Vec<(f64, f64)> = experiments
        .iter()
        .filter_map(|e| e.silhouettes.get("E_a").map(|&s| (e.accuracy, s)))
        .collect();
    out.extend(entry("zero-shot accuracy", "E_a silhouette", sil_pairs));

    let topo_pairs: Vec<(f64, f64)> = experiments
        .iter()
        .filter(|e| e.accuracy > 0.0)
        .filter_map(|e| e.topo.get("E_a_vs_E_t").map(|&t| (e.accuracy.ln(), t)))
        .collect();
    out.extend(entry(
        "ln zero-shot accuracy",
        "E_a vs E_t topological similarity",
        topo_pairs,
    ));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// Serializes a grid report as stable JSON or condition-grid Markdown tables.
pub fn emit_report(
    report: &GridReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), ReportError> {
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map_err(|e| ReportError::Serialization(e.to_string()))?,
        ReportFormat::Markdown => render_markdown(report),
    };
    std::fs::write(path, text)?;
    Ok(())
}

const PRETRAINING_COLUMNS: [PretrainingCondition; 3] = [
    PretrainingCondition::Dirty,
    PretrainingCondition::Clean,
    PretrainingCondition::None,
];
const TRAINING_ROWS: [TrainingCondition; 2] = [TrainingCondition::Dirty, TrainingCondition::Clean];

fn condition_cell(
    experiments: &[MetricsReport],
    training: TrainingCondition,
    pretraining: PretrainingCondition,
    value: impl Fn(&MetricsReport) -> Option<f64>,
) -> String {
    experiments
        .iter()
        .find(|e| e.training_condition == training && e.pretraining_condition == pretraining)
        .and_then(value)
        .map_or_else(|| "—".to_string(), |v| format!("{v:.2}"))
}

/// Renders the three tables (accuracy, silhouettes, topological similarity)
/// in the training-rows × pretraining-columns layout, cells at 2 decimals.
pub fn render_markdown(report: &GridReport) -> String {
    let mut out = String::new();
    let experiments = &report.experiments;

    out.push_str("# Embedding-space audit\n\n");
    out.push_str("## Zero-shot accuracy\n\n");
    out.push_str("| Training | Dirty | Clean | None |\n|---|---|---|---|\n");
    for training in TRAINING_ROWS {
        out.push_str(&format!("| {training:?} |"));
        for pretraining in PRETRAINING_COLUMNS {
            out.push_str(&format!(
                " {} |",
                condition_cell(experiments, training, pretraining, |e| Some(e.accuracy))
            ));
        }
        out.push('\n');
    }
    if let Some(guess) = report.random_guess {
        out.push_str(&format!("\nRandom guess: {guess:.2}\n"));
    }

    out.push_str("\n## Silhouette scores\n\n");
    out.push_str("| Training | Space | Dirty | Clean | None |\n|---|---|---|---|---|\n");
    for training in TRAINING_ROWS {
        for space in ["x_a", "E_a"] {
            out.push_str(&format!("| {training:?} | {space} |"));
            for pretraining in PRETRAINING_COLUMNS {
                out.push_str(&format!(
                    " {} |",
                    condition_cell(experiments, training, pretraining, |e| e
                        .silhouettes
                        .get(space)
                        .copied())
                ));
            }
            out.push('\n');
        }
    }

    out.push_str("\n## Topological structure similarity\n\n");
    out.push_str("| Representations | Training | Dirty | Clean | None |\n|---|---|---|---|---|\n");
    for pair in ["x_a_vs_E_a", "x_t_vs_E_t", "E_a_vs_E_t"] {
        for training in TRAINING_ROWS {
            out.push_str(&format!(
                "| {} | {training:?} |",
                pair.replace("_vs_", " vs ")
            ));
            for pretraining in PRETRAINING_COLUMNS {
                out.push_str(&format!(
                    " {} |",
                    condition_cell(experiments, training, pretraining, |e| e
                        .topo
                        .get(pair)
                        .copied())
                ));
            }
            out.push('\n');
        }
    }

    if !report.correlations.is_empty() {
        out.push_str("\n## Correlations\n\n");
        out.push_str("| x | y | rho | p | n |\n|---|---|---|---|---|\n");
        for c in &report.correlations {
            out.push_str(&format!(
                "| {} | {} | {:.2} | {:.4} | {} |\n",
                c.x_description, c.y_description, c.rho, c.p_value, c.n
            ));
        }
    }

    if !report.failures.is_empty() {
        out.push_str("\n## Failed experiments\n\n");
        for f in &report.failures {
            out.push_str(&format!("- {}: {}\n", f.name, f.error));
        }
    }
    out
}
