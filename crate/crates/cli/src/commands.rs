use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use log::info;
use serde::{Deserialize, Serialize};

use explsum::engine::TraceEvent;
use explsum::ingest::{self, BinSpec, Table, TabularSchema};
use explsum::io::{self, RawExplanation};
use explsum::pipeline::{self, PipelineConfig, StageTimings};
use explsum::summary::{build_summary, CostSummary, SummaryArtifact};
use explsum::{ExplanationMatrix, NormalizeOptions, Scalar, Side};

use crate::args::{IngestCommand, InspectArgs, Precision, SummarizeArgs};
use crate::{CliError, CliResult};

pub const MANIFEST_FORMAT: &str = "manifest-json v1";

/// Record of one `summarize` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub input: String,
    pub output: String,
    pub precision: String,
    pub config: PipelineConfig,
    pub seed: u64,
    pub timings: StageTimings,
    /// Seconds spent building the artifact after the engine finished.
    pub summary_build: f64,
    pub evaluations: u64,
    pub accepted_merges: usize,
    pub iterations: usize,
    pub row_clusters: usize,
    pub col_clusters: usize,
    pub cost: CostSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEvent>,
}

fn read_raw<F: Scalar>(path: &Path) -> CliResult<RawExplanation<F>> {
    io::read_explmat(path).map_err(|e| {
        let code = CliError::from(e);
        CliError {
            code: code.code,
            source: code.source.context(format!("reading {}", path.display())),
        }
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::input)
}

/// Runs the pipeline on an explmat file and returns the artifact together
/// with the run manifest. Nothing is written.
pub fn summarize_file<F: Scalar>(
    input: &Path,
    config: &PipelineConfig,
) -> CliResult<(SummaryArtifact, RunManifest)> {
    let raw = read_raw::<F>(input)?;
    let out = pipeline::run_pipeline(&raw, config)?;
    let t = Instant::now();
    let config_echo = serde_json::to_value(config).map_err(CliError::internal)?;
    // Block statistics describe the user's matrix; the cost is the one the
    // engine optimized.
    let artifact = build_summary(
        &out.normalized,
        &out.result.clustering,
        &out.result.cost,
        config_echo,
        config.seed,
    )?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        input: input.display().to_string(),
        output: String::new(),
        precision: if std::mem::size_of::<F>() == 4 { "f32" } else { "f64" }.into(),
        config: config.clone(),
        seed: config.seed,
        timings: out.timings,
        summary_build: t.elapsed().as_secs_f64(),
        evaluations: out.result.evaluations,
        accepted_merges: out.result.accepted_merges,
        iterations: out.result.iterations,
        row_clusters: out.result.clustering.n_clusters(Side::Rows),
        col_clusters: out.result.clustering.n_clusters(Side::Cols),
        cost: CostSummary::from(&out.result.cost),
        trace: out.result.trace,
    };
    Ok((artifact, manifest))
}

pub fn cmd_summarize(args: &SummarizeArgs) -> CliResult<RunManifest> {
    let config = args.pipeline.resolve()?;
    let (artifact, mut manifest) = match args.precision {
        Precision::F64 => summarize_file::<f64>(&args.input, &config)?,
        Precision::F32 => summarize_file::<f32>(&args.input, &config)?,
    };
    manifest.output = args.out.display().to_string();
    write_file(&args.out, &artifact.to_json())?;
    let manifest_path = args.manifest_path();
    write_file(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).map_err(CliError::internal)?,
    )?;
    info!(
        "{}x{} clusters, total cost {:.6}, {} evaluations in {:.3}s",
        manifest.row_clusters,
        manifest.col_clusters,
        manifest.cost.total,
        manifest.evaluations,
        manifest.timings.total()
    );
    Ok(manifest)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::input)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(CliError::input)
}

pub fn cmd_ingest(cmd: &IngestCommand) -> CliResult<()> {
    match cmd {
        IngestCommand::Tabular {
            csv,
            schema,
            bins,
            bins_out,
            out,
        } => {
            let schema: TabularSchema = read_json(schema)?;
            let file = fs::File::open(csv)
                .with_context(|| format!("reading {}", csv.display()))
                .map_err(CliError::input)?;
            let table = Table::from_csv(file)?;
            let given: Option<Vec<BinSpec>> = bins.as_deref().map(read_json).transpose()?;
            let d = ingest::discretize_tabular::<f64>(&table, &schema, given.as_deref())?;
            if let Some(path) = bins_out {
                write_file(path, &serde_json::to_string_pretty(&d.bins).map_err(CliError::internal)?)?;
            }
            let raw = RawExplanation {
                data: d.matrix,
                rows: d.rows,
                cols: d.cols,
            };
            io::write_explmat(out, &raw)?;
            info!("wrote {}x{} matrix to {}", raw.data.n_rows(), raw.data.n_cols(), out.display());
        }
        IngestCommand::Topics {
            input,
            topics,
            out,
            signed,
        } => {
            let raw = read_raw::<f64>(input)?;
            let map: BTreeMap<String, String> = read_json(topics)?;
            let words = raw.normalized(NormalizeOptions {
                signed: *signed,
                ..Default::default()
            })?;
            let folded = ingest::aggregate_topics(&words, &map)?;
            io::write_explmat(out, &RawExplanation::from(&folded))?;
            info!("folded {} words into {} topics", words.n_cols(), folded.n_cols());
        }
    }
    Ok(())
}

fn describe_summary(a: &SummaryArtifact, w: &mut dyn Write) -> std::io::Result<()> {
    let m = &a.meta;
    writeln!(w, "{} instances x {} features (seed {})", m.shape[0], m.shape[1], m.seed)?;
    writeln!(
        w,
        "{} row clusters, {} column clusters, {} blocks",
        a.rows.len(),
        a.cols.len(),
        a.blocks.len()
    )?;
    writeln!(
        w,
        "cost: model {:.6} + loss {:.6} = {:.6}",
        m.cost.model, m.cost.loss, m.cost.total
    )?;
    for r in &a.rows {
        let correct = r.instances.iter().filter(|i| i.correct()).count();
        write!(
            w,
            "R{:<4} {:>6} instances  mass {:.4}  correct {:>5.1}%  ",
            r.cluster,
            r.instances.len(),
            r.mass,
            100.0 * correct as f64 / r.instances.len().max(1) as f64
        )?;
        let blocks: Vec<String> = a
            .blocks
            .iter()
            .filter(|b| b.r == r.cluster)
            .take(5)
            .map(|b| format!("C{}:{:.4}", b.c, b.mass))
            .collect();
        writeln!(w, "{}", blocks.join(" "))?;
    }
    for c in &a.cols {
        let names: Vec<&str> = c.features.iter().take(4).map(|f| f.name.as_str()).collect();
        let more = c.features.len().saturating_sub(names.len());
        write!(w, "C{:<4} {:>6} features  mass {:.4}  {}", c.cluster, c.features.len(), c.mass, names.join(", "))?;
        if more > 0 {
            write!(w, " (+{more})")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn describe_matrix<F: Scalar>(m: &ExplanationMatrix<F>, w: &mut dyn Write) -> std::io::Result<()> {
    let data = m.data();
    let live_rows = data.row_sums().iter().filter(|&&v| v > F::zero()).count();
    let live_cols = data.col_sums().iter().filter(|&&v| v > F::zero()).count();
    let max = data.entries().iter().map(|e| e.value.as_f64()).fold(0.0, f64::max);
    let mut classes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in m.row_meta() {
        *classes.entry(r.class.as_str()).or_default() += 1;
    }
    writeln!(w, "{} instances x {} features, {} nonzeros (density {:.4})", m.n_rows(), m.n_cols(), m.nnz(), data.density())?;
    writeln!(w, "nonzero rows {live_rows}, nonzero columns {live_cols}, largest normalized value {max:.6}")?;
    let accuracy = m.row_meta().iter().filter(|r| r.correct()).count() as f64 / m.n_rows().max(1) as f64;
    writeln!(w, "prediction accuracy {:.1}%", 100.0 * accuracy)?;
    for (class, n) in classes {
        writeln!(w, "  class {class}: {n}")?;
    }
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs, w: &mut dyn Write) -> CliResult<()> {
    if let Some(path) = &args.summary {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(CliError::input)?;
        let artifact = SummaryArtifact::from_json(&text)?;
        describe_summary(&artifact, w).map_err(CliError::internal)?;
    } else if let Some(path) = &args.matrix {
        let m = read_raw::<f64>(path)?.normalized(NormalizeOptions {
            signed: true,
            ..Default::default()
        })?;
        describe_matrix(&m, w).map_err(CliError::internal)?;
    }
    Ok(())
}
