//! The heuristic ladder: each variant adds one stage to the previous one,
//! run once per candidate mode.

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use anyhow::Context;

use explsum::cost::loss_with;
use explsum::engine::CandidateMode;
use explsum::pipeline::{run_normalized, PipelineConfig};
use explsum::synth::{planted_blocks, PlantedConfig};
use explsum::{ExplanationMatrix, LossKind, Side};

use crate::args::BenchArgs;
use crate::{CliError, CliResult};

pub const CSV_HEADER: &str = "variant,mode,loss,total_cost,objective,wall_clock_s,evaluations,row_clusters,col_clusters";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Whole-matrix divergence, no heuristics.
    Baseline,
    Marginalized,
    Smoothed,
    Preclustered,
}

impl Variant {
    pub const LADDER: [Variant; 4] = [
        Variant::Baseline,
        Variant::Marginalized,
        Variant::Smoothed,
        Variant::Preclustered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline-kl",
            Variant::Marginalized => "marginalized",
            Variant::Smoothed => "marginalized+smooth",
            Variant::Preclustered => "marginalized+smooth+precluster",
        }
    }

    pub fn apply(self, base: &PipelineConfig, mode: CandidateMode) -> PipelineConfig {
        let mut c = PipelineConfig {
            candidate_mode: mode,
            loss: LossKind::Marginalized,
            smooth: false,
            precluster: false,
            ..base.clone()
        };
        match self {
            Variant::Baseline => c.loss = LossKind::WholeMatrix,
            Variant::Marginalized => {}
            Variant::Smoothed => c.smooth = true,
            Variant::Preclustered => {
                c.smooth = true;
                c.precluster = true;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub mode: CandidateMode,
    /// Marginalized loss of the final clustering on the normalized input, so
    /// every variant is scored on the same yardstick.
    pub loss: f64,
    /// `loss` plus the cluster-count penalties.
    pub total_cost: f64,
    /// The cost the variant itself minimized, on its working matrix.
    pub objective: f64,
    pub wall_clock: f64,
    pub evaluations: u64,
    pub row_clusters: usize,
    pub col_clusters: usize,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let mode = match self.mode {
            CandidateMode::Exhaustive => "exhaustive",
            CandidateMode::Lsh => "lsh",
        };
        format!(
            "{},{},{:.9},{:.9},{:.9},{:.6},{},{},{}",
            self.variant.name(),
            mode,
            self.loss,
            self.total_cost,
            self.objective,
            self.wall_clock,
            self.evaluations,
            self.row_clusters,
            self.col_clusters
        )
    }
}

pub fn run_variant(
    matrix: &ExplanationMatrix<f64>,
    base: &PipelineConfig,
    variant: Variant,
    mode: CandidateMode,
) -> CliResult<BenchRow> {
    let config = variant.apply(base, mode);
    let t = Instant::now();
    let out = run_normalized(matrix.clone(), &config)?;
    let wall_clock = t.elapsed().as_secs_f64();
    let clustering = &out.result.clustering;
    let loss = loss_with(matrix, clustering, LossKind::Marginalized)?.total;
    let (r, c) = (clustering.n_clusters(Side::Rows), clustering.n_clusters(Side::Cols));
    Ok(BenchRow {
        variant,
        mode,
        loss,
        total_cost: loss + config.beta_rows * r as f64 + config.beta_cols * c as f64,
        objective: out.result.cost.total,
        wall_clock,
        evaluations: out.result.evaluations,
        row_clusters: r,
        col_clusters: c,
    })
}

pub fn run_ladder(matrix: &ExplanationMatrix<f64>, base: &PipelineConfig, modes: &[CandidateMode]) -> CliResult<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &mode in modes {
        for variant in Variant::LADDER {
            rows.push(run_variant(matrix, base, variant, mode)?);
        }
    }
    Ok(rows)
}

pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.to_csv());
    }
    s
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<String> {
    let base = args.pipeline.resolve()?;
    let matrix = match &args.input {
        Some(path) => explsum::io::read_explmat::<f64>(path)
            .and_then(|raw| raw.normalized(base.normalize))
            .map_err(|e| {
                let e = CliError::from(e);
                CliError {
                    code: e.code,
                    source: e.source.context(format!("reading {}", path.display())),
                }
            })?,
        None => {
            let planted = planted_blocks::<f64>(&PlantedConfig {
                n_rows: args.rows,
                n_cols: args.cols,
                n_blocks: args.blocks,
                density: args.density,
                noise: args.noise,
                seed: base.seed,
            })
            .map_err(CliError::config)?;
            planted.matrix
        }
    };
    let modes = match args.only_mode {
        Some(m) => vec![m],
        None => vec![CandidateMode::Exhaustive, CandidateMode::Lsh],
    };
    let csv = render_csv(&run_ladder(&matrix, &base, &modes)?);
    match &args.out {
        Some(path) => fs::write(path, &csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::input)?,
        None => print!("{csv}"),
    }
    Ok(csv)
}
