//! Command-line front end for the embedding-space audit toolkit.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use embed_audit::cluster_metrics::silhouette_score;
use embed_audit::corpus_io::{
    load_embedding_set, read_manifest_allow_duplicates, write_manifest_jsonl, write_npy,
    CorpusError, Role,
};
use embed_audit::geometry::{l2_normalize, pairwise_divergence, Metric};
use embed_audit::leakage::{filter_dataset, FilterOptions};
use embed_audit::report::{
    emit_report, run_experiment, run_grid, AnalysisOptions, ExperimentSpec, GridConfig, PathPair,
    PretrainingCondition, ReportFormat, RolePaths, TrainingCondition,
};
use embed_audit::svg::render_scatter;
use embed_audit::synth::{gaussian_clusters, leaky_vs_clean_scenario, ClusterSpec};
use embed_audit::topo::{topo_similarity, TopoOptions};
use embed_audit::tsne::{coords_csv, tsne, TsneConfig};
use embed_audit::zeroshot::evaluate;
use embed_audit::ScalarEmbeddingSet;

const EXIT_VALIDATION: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "embed-audit",
    version,
    about = "Diagnostics for cross-modal contrastive embedding spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Distance metric: cosine or euclidean.
    #[arg(long, default_value = "cosine", global = true)]
    metric: Metric,
    /// Upper end of the neighborhood size range (default ⌈√n⌉).
    #[arg(long, global = true)]
    k_max: Option<usize>,
    /// Count each point as its own nearest neighbor.
    #[arg(long, global = true)]
    include_self: bool,
    /// Seed for every stochastic step.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Directory for generated artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Report format: json or markdown.
    #[arg(long, default_value = "json", global = true)]
    format: ReportFormat,
}

#[derive(Args, Clone)]
struct ExperimentPaths {
    #[arg(long)]
    x_a_matrix: PathBuf,
    #[arg(long)]
    x_a_manifest: PathBuf,
    #[arg(long)]
    e_a_matrix: PathBuf,
    #[arg(long)]
    e_a_manifest: PathBuf,
    #[arg(long)]
    x_t_matrix: PathBuf,
    #[arg(long)]
    x_t_manifest: PathBuf,
    #[arg(long)]
    e_t_matrix: PathBuf,
    #[arg(long)]
    e_t_manifest: PathBuf,
}

impl ExperimentPaths {
    fn into_role_paths(self) -> RolePaths {
        let pair = |matrix, manifest| PathPair { matrix, manifest };
        RolePaths {
            x_a: pair(self.x_a_matrix, self.x_a_manifest),
            e_a: pair(self.e_a_matrix, self.e_a_manifest),
            x_t: pair(self.x_t_matrix, self.x_t_manifest),
            e_t: pair(self.e_t_matrix, self.e_t_manifest),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every metric on one experiment's four embedding spaces.
    Audit {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        paths: ExperimentPaths,
        #[arg(long, default_value = "experiment")]
        name: String,
        #[arg(long, default_value = "dirty")]
        training: String,
        #[arg(long, default_value = "none")]
        pretraining: String,
        /// Skip t-SNE rendering.
        #[arg(long)]
        skip_tsne: bool,
    },
    /// Run a grid of experiments from a TOML or JSON config.
    Grid {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        config: PathBuf,
    },
    /// Remove caption records that leak class-label words.
    FilterCaptions {
        #[command(flatten)]
        common: CommonOpts,
        /// Caption manifest (JSONL or CSV); repeated audio ids allowed.
        #[arg(long)]
        manifest: PathBuf,
        /// File with one class label per line. Defaults to the distinct
        /// labels appearing in the manifest.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Also match trailing-s plural variants of class words.
        #[arg(long)]
        strip_plural_s: bool,
        /// Word to exclude from the class vocabulary (repeatable).
        #[arg(long = "stopword")]
        stopwords: Vec<String>,
    },
    /// Project one embedding set to 2-D and render an SVG scatter plot.
    Tsne {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Space role: x_a, E_a, x_t, or E_t.
        #[arg(long, default_value = "E_a")]
        role: Role,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
    /// Silhouette score of one labeled embedding set.
    Silhouette {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Neighborhood-overlap topological similarity between two spaces.
    TopoSim {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        p_matrix: PathBuf,
        #[arg(long)]
        p_manifest: PathBuf,
        #[arg(long)]
        q_matrix: PathBuf,
        #[arg(long)]
        q_manifest: PathBuf,
    },
    /// Zero-shot classification of audio embeddings against class text rows.
    ZeroShot {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        audio_matrix: PathBuf,
        #[arg(long)]
        audio_manifest: PathBuf,
        #[arg(long)]
        text_matrix: PathBuf,
        #[arg(long)]
        text_manifest: PathBuf,
    },
    /// Generate synthetic benchmark embeddings.
    Synth {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 5)]
        n_classes: usize,
        #[arg(long, default_value_t = 40)]
        points_per_class: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        /// When set, emit a leaky-vs-clean scenario (audio + class text)
        /// with this leak strength in [0, 1] instead of plain clusters.
        #[arg(long)]
        leak: Option<f64>,
    },
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::Io(_) | CorpusError::Npy(embed_audit::corpus_io::NpyError::Io(_)) => {
                EXIT_IO
            }
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! validation_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::validation(e.to_string())
            }
        }
    )*};
}
validation_from!(
    embed_audit::geometry::GeometryError,
    embed_audit::cluster_metrics::ClusterMetricError,
    embed_audit::topo::TopoError,
    embed_audit::zeroshot::ZeroShotError,
    embed_audit::leakage::LeakageError,
    embed_audit::tsne::TsneError,
    embed_audit::synth::SynthError,
    embed_audit::corpus_io::NpyError
);

impl From<embed_audit::report::ReportError> for CliError {
    fn from(e: embed_audit::report::ReportError) -> Self {
        let code = match &e {
            embed_audit::report::ReportError::Io(_) => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn out_dir(common: &CommonOpts) -> Result<PathBuf, CliError> {
    let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn analysis_options(common: &CommonOpts, skip_tsne: bool) -> AnalysisOptions {
    AnalysisOptions {
        metric: common.metric,
        k_max: common.k_max,
        include_self: common.include_self,
        seed: common.seed,
        skip_tsne,
        ..AnalysisOptions::default()
    }
}

fn load_normalized(
    matrix: &Path,
    manifest: &Path,
    role: Role,
) -> Result<ScalarEmbeddingSet, CliError> {
    let set = load_embedding_set(matrix, manifest, role)?;
    if role.is_cross_modal() {
        Ok(l2_normalize(&set)?)
    } else {
        Ok(set)
    }
}

fn emit<T: serde::Serialize>(
    value: &T,
    format: ReportFormat,
    markdown: impl FnOnce() -> String,
) -> Result<(), CliError> {
    match format {
        ReportFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?
        ),
        ReportFormat::Markdown => println!("{}", markdown()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Audit {
            common,
            paths,
            name,
            training,
            pretraining,
            skip_tsne,
        } => {
            let training: TrainingCondition = serde_json::from_value(training.clone().into())
                .map_err(|_| {
                    CliError::validation(format!("unknown training condition {training:?}"))
                })?;
            let pretraining: PretrainingCondition =
                serde_json::from_value(pretraining.clone().into()).map_err(|_| {
                    CliError::validation(format!("unknown pretraining condition {pretraining:?}"))
                })?;
            let dir = out_dir(&common)?;
            let spec = ExperimentSpec {
                name: name.clone(),
                training_condition: training,
                pretraining_condition: pretraining,
                paths: Some(paths.into_role_paths()),
            };
            let options = analysis_options(&common, skip_tsne);
            let report = run_experiment(&spec, &options, Some(&dir))?;
            let path = dir.join(format!("{name}_metrics.json"));
            std::fs::write(
                &path,
                serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::validation(e.to_string()))?,
            )?;
            println!(
                "{name}: accuracy {:.4}, silhouette E_a {:.4}, topo E_a vs E_t {:.4}",
                report.accuracy, report.silhouettes["E_a"], report.topo["E_a_vs_E_t"]
            );
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Grid { common, config } => {
            let config = GridConfig::from_path(&config)?;
            let dir = out_dir(&common)?;
            let report = run_grid(&config, Some(&dir))?;
            let (file, format) = match common.format {
                ReportFormat::Json => ("report.json", ReportFormat::Json),
                ReportFormat::Markdown => ("report.md", ReportFormat::Markdown),
            };
            let path = dir.join(file);
            emit_report(&report, format, &path)?;
            println!(
                "grid: {} experiments succeeded, {} failed; wrote {}",
                report.experiments.len(),
                report.failures.len(),
                path.display()
            );
            for f in &report.failures {
                eprintln!("failed: {}: {}", f.name, f.error);
            }
            if report.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(EXIT_PARTIAL))
            }
        }
        Command::FilterCaptions {
            common,
            manifest,
            classes,
            strip_plural_s,
            stopwords,
        } => {
            let records = read_manifest_allow_duplicates(&manifest)?;
            let class_labels: Vec<String> = match classes {
                Some(path) => std::fs::read_to_string(path)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
                None => {
                    let distinct: BTreeSet<&str> =
                        records.iter().map(|r| r.label.as_str()).collect();
                    distinct.into_iter().map(String::from).collect()
                }
            };
            let options = FilterOptions {
                strip_plural_s,
                extra_stopwords: stopwords.into_iter().collect(),
                ..FilterOptions::default()
            };
            let report = filter_dataset(&records, &class_labels, &options)?;
            let dir = out_dir(&common)?;
            let kept_path = dir.join("filtered_manifest.jsonl");
            write_manifest_jsonl(&report.kept, &kept_path)?;
            let report_path = dir.join("filter_report.json");
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::validation(e.to_string()))?,
            )?;
            println!(
                "kept {} of {} records (removal rate {:.4}); wrote {} and {}",
                report.kept.len(),
                records.len(),
                report.removal_rate,
                kept_path.display(),
                report_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Tsne {
            common,
            matrix,
            manifest,
            role,
            perplexity,
            iterations,
        } => {
            let set = load_normalized(&matrix, &manifest, role)?;
            let config = TsneConfig {
                perplexity,
                iterations,
                seed: common.seed,
                input_metric: common.metric,
                ..TsneConfig::default()
            };
            let result = tsne(&set, &config)?;
            let dir = out_dir(&common)?;
            let stem = role.short_name();
            let svg_path = dir.join(format!("{stem}_tsne.svg"));
            render_scatter(
                &result.coords,
                set.labels.as_deref().unwrap_or(&[]),
                &svg_path,
            )?;
            let csv_path = dir.join(format!("{stem}_tsne.csv"));
            std::fs::write(
                &csv_path,
                coords_csv(&result, &set.ids, set.labels.as_deref()),
            )?;
            println!(
                "t-SNE: {} points, final KL {:.6}; wrote {} and {}",
                set.len(),
                result.kl_trace.last().copied().unwrap_or(f64::NAN),
                svg_path.display(),
                csv_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Silhouette {
            common,
            matrix,
            manifest,
        } => {
            let set = load_normalized(&matrix, &manifest, Role::AudioCrossModal)?;
            let dm = pairwise_divergence(&set, common.metric)?;
            let score = silhouette_score(&dm, set.labels()?)?;
            emit(
                &serde_json::json!({ "silhouette": score, "metric": common.metric, "n": set.len() }),
                common.format,
                || format!("Silhouette score: {score:.4}"),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::TopoSim {
            common,
            p_matrix,
            p_manifest,
            q_matrix,
            q_manifest,
        } => {
            let p = load_embedding_set(&p_matrix, &p_manifest, Role::AudioCrossModal)?;
            let q = load_embedding_set(&q_matrix, &q_manifest, Role::TextCrossModal)?;
            let options = TopoOptions {
                metric: common.metric,
                k_range: common.k_max.map(|k| (1, k)),
                include_self: common.include_self,
                full_clouds_unimodal: false,
            };
            let result = topo_similarity(
                &p,
                &q,
                options.metric,
                options.k_range,
                options.include_self,
            )?;
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("topo_curve.csv"), result.curve_csv())?;
            }
            emit(&result, common.format, || {
                format!(
                    "Topological similarity: S = {:.4} at k = {} (k range {}..={})",
                    result.s_max, result.k_at_max, result.k_range.0, result.k_range.1
                )
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ZeroShot {
            common,
            audio_matrix,
            audio_manifest,
            text_matrix,
            text_manifest,
        } => {
            let audio = load_normalized(&audio_matrix, &audio_manifest, Role::AudioCrossModal)?;
            let text = load_normalized(&text_matrix, &text_manifest, Role::TextCrossModal)?;
            let report = evaluate(&audio, &text)?;
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("confusion.csv"), report.confusion_csv())?;
            }
            emit(&report, common.format, || {
                format!(
                    "Zero-shot accuracy: {:.4} over {} items, {} classes",
                    report.accuracy,
                    report.predictions.len(),
                    report.class_order.len()
                )
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            common,
            n_classes,
            points_per_class,
            dim,
            separation,
            leak,
        } => {
            let spec = ClusterSpec {
                n_classes,
                points_per_class,
                dim,
                separation,
                seed: common.seed,
            };
            let dir = out_dir(&common)?;
            let write_set = |set: &ScalarEmbeddingSet, stem: &str| -> Result<(), CliError> {
                write_npy(&set.matrix, &dir.join(format!("{stem}.npy")))?;
                let records: Vec<_> = set
                    .ids
                    .iter()
                    .zip(set.labels.as_deref().unwrap_or(&[]))
                    .map(|(id, label)| embed_audit::corpus_io::ItemRecord {
                        id: id.clone(),
                        label: label.clone(),
                        caption: None,
                        split: None,
                    })
                    .collect();
                write_manifest_jsonl(&records, &dir.join(format!("{stem}.jsonl")))?;
                Ok(())
            };
            match leak {
                Some(strength) => {
                    let (audio, text) = leaky_vs_clean_scenario::<f64>(&spec, strength)?;
                    write_set(&audio, "E_a")?;
                    write_set(&text, "E_t")?;
                    println!(
                        "wrote leaky scenario (strength {strength}) to {}",
                        dir.display()
                    );
                }
                None => {
                    let set = gaussian_clusters::<f64>(&spec)?;
                    write_set(&set, "clusters")?;
                    println!("wrote {} clustered points to {}", set.len(), dir.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
