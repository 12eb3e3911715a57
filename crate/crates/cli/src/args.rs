use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use explsum::engine::CandidateMode;
use explsum::matrix::Scaling;
use explsum::pipeline::{PipelineConfig, StageOrder};
use explsum::LossKind;

use crate::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "explsum", version, about = "Summarize local explanations by co-clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summarize an explmat-json matrix into a summary-json artifact.
    Summarize(SummarizeArgs),
    /// Turn tabular data or word-level explanations into an explmat-json matrix.
    #[command(subcommand)]
    Ingest(IngestCommand),
    /// Print an overview of a summary or a matrix.
    Inspect(InspectArgs),
    /// Run the variant ladder and write one CSV row per variant.
    Bench(BenchArgs),
    /// Serve a summary over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Parses a kebab-case name through the type's serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

/// Pipeline flags. Anything left unset falls back to `--config`, then to the
/// built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// JSON file with a full or partial pipeline configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "beta-r")]
    pub beta_rows: Option<f64>,
    #[arg(long = "beta-c")]
    pub beta_cols: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub smooth: Option<Switch>,
    /// Knee sensitivity used by smoothing.
    #[arg(long)]
    pub sensitivity: Option<f64>,
    #[arg(long, value_enum)]
    pub precluster: Option<Switch>,
    #[arg(long)]
    pub precluster_k_rows: Option<usize>,
    #[arg(long)]
    pub precluster_k_cols: Option<usize>,
    /// smooth-first or precluster-first.
    #[arg(long, value_parser = kebab::<StageOrder>)]
    pub order: Option<StageOrder>,
    /// exhaustive or lsh.
    #[arg(long, value_parser = kebab::<CandidateMode>)]
    pub candidate_mode: Option<CandidateMode>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub lsh_tables: Option<usize>,
    #[arg(long)]
    pub lsh_hashes: Option<usize>,
    #[arg(long)]
    pub lsh_width: Option<f64>,
    /// marginalized, raw or whole-matrix.
    #[arg(long, value_parser = kebab::<LossKind>)]
    pub loss: Option<LossKind>,
    /// Use magnitudes of signed attributions.
    #[arg(long)]
    pub signed: bool,
    /// global or per-feature.
    #[arg(long, value_parser = kebab::<Scaling>)]
    pub scaling: Option<Scaling>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Record every engine step in the manifest.
    #[arg(long)]
    pub trace: bool,
}

impl PipelineArgs {
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut c: PipelineConfig = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::input(anyhow::Error::new(e).context(format!("reading {}", path.display()))))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(anyhow::Error::new(e).context(format!("parsing {}", path.display()))))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident <- $flag:expr),* $(,)?) => {
                $(if let Some(v) = $flag { c.$field = v; })*
            };
        }
        set!(
            beta_rows <- self.beta_rows,
            beta_cols <- self.beta_cols,
            seed <- self.seed,
            smooth <- self.smooth.map(Switch::is_on),
            sensitivity <- self.sensitivity,
            precluster <- self.precluster.map(Switch::is_on),
            order <- self.order,
            candidate_mode <- self.candidate_mode,
            k_neighbors <- self.k_neighbors,
            lsh_tables <- self.lsh_tables,
            lsh_hashes <- self.lsh_hashes,
            loss <- self.loss,
        );
        if self.precluster_k_rows.is_some() {
            c.precluster_k_rows = self.precluster_k_rows;
        }
        if self.precluster_k_cols.is_some() {
            c.precluster_k_cols = self.precluster_k_cols;
        }
        if self.lsh_width.is_some() {
            c.lsh_width = self.lsh_width;
        }
        if self.max_iterations.is_some() {
            c.max_iterations = self.max_iterations;
        }
        if let Some(s) = self.scaling {
            c.normalize.scaling = s;
        }
        c.normalize.signed |= self.signed;
        c.trace |= self.trace;
        c.validate().map_err(CliError::config)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// explmat-json input.
    #[arg(long)]
    pub input: PathBuf,
    /// summary-json output.
    #[arg(long)]
    pub out: PathBuf,
    /// manifest-json output; defaults to the output path with a
    /// `.manifest.json` extension.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub precision: Precision,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

impl SummarizeArgs {
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.out.with_extension("manifest.json"))
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum IngestCommand {
    /// One-hot encode a CSV table through quantile or level bins.
    Tabular {
        #[arg(long)]
        csv: PathBuf,
        /// JSON tabular schema.
        #[arg(long)]
        schema: PathBuf,
        /// Reuse bins from an earlier run instead of learning them.
        #[arg(long)]
        bins: Option<PathBuf>,
        /// Where to write the bins that were used.
        #[arg(long)]
        bins_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fold word columns into topic columns.
    Topics {
        /// explmat-json with one column per word.
        #[arg(long)]
        input: PathBuf,
        /// JSON object mapping word ids to topic names.
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        signed: bool,
    },
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct InspectArgs {
    /// summary-json to describe.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// explmat-json to describe.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// explmat-json input; a planted matrix is generated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    pub rows: usize,
    #[arg(long, default_value_t = 60)]
    pub cols: usize,
    #[arg(long, default_value_t = 5)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
    /// Limit the ladder to one candidate mode.
    #[arg(long, value_parser = kebab::<CandidateMode>)]
    pub only_mode: Option<CandidateMode>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub summary: PathBuf,
    /// The matrix the summary was built from; enables /subset.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}
