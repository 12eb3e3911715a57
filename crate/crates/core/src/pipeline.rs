//! End-to-end pipeline: normalize, smooth, pre-cluster, merge.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cost::{Clustering, LossKind};
use crate::engine::{self, CandidateMode, EngineConfig, EngineResult, LshParams};
use crate::error::{Error, Result};
use crate::io::RawExplanation;
use crate::knee;
use crate::matrix::{ExplanationMatrix, NormalizeOptions};
use crate::scalar::Scalar;
use crate::spectral::{self, SpectralConfig, MAX_DEFAULT_K};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageOrder {
    /// Smooth, then pre-cluster the smoothed matrix.
    #[default]
    SmoothFirst,
    /// Pre-cluster the normalized matrix, then smooth for the engine.
    PreclusterFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub normalize: NormalizeOptions,
    pub smooth: bool,
    pub sensitivity: f64,
    pub precluster: bool,
    pub precluster_k_rows: Option<usize>,
    pub precluster_k_cols: Option<usize>,
    pub order: StageOrder,
    pub beta_rows: f64,
    pub beta_cols: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub candidate_mode: CandidateMode,
    pub k_neighbors: usize,
    pub lsh_tables: usize,
    pub lsh_hashes: usize,
    pub lsh_width: Option<f64>,
    pub max_iterations: Option<usize>,
    pub trace: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let lsh = LshParams::<f64>::default();
        Self {
            normalize: NormalizeOptions::default(),
            smooth: true,
            sensitivity: knee::DEFAULT_SENSITIVITY,
            precluster: true,
            precluster_k_rows: None,
            precluster_k_cols: None,
            order: StageOrder::default(),
            beta_rows: engine::DEFAULT_BETA,
            beta_cols: engine::DEFAULT_BETA,
            seed: 0,
            loss: LossKind::Marginalized,
            candidate_mode: CandidateMode::Exhaustive,
            k_neighbors: engine::DEFAULT_K_NEIGHBORS,
            lsh_tables: lsh.n_tables,
            lsh_hashes: lsh.hashes_per_table,
            lsh_width: None,
            max_iterations: None,
            trace: false,
        }
    }
}

impl PipelineConfig {
    pub fn engine_config<F: Scalar>(&self) -> EngineConfig<F> {
        EngineConfig {
            beta_rows: F::of(self.beta_rows),
            beta_cols: F::of(self.beta_cols),
            seed: self.seed,
            candidate_mode: self.candidate_mode,
            k_neighbors: self.k_neighbors,
            max_iterations: self.max_iterations,
            loss: self.loss,
            lsh: LshParams {
                n_tables: self.lsh_tables,
                hashes_per_table: self.lsh_hashes,
                bucket_width: self.lsh_width.map(F::of),
            },
            trace: self.trace,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sensitivity > 0.0) {
            return Err(Error::Config("sensitivity must be positive".into()));
        }
        if self.lsh_width.is_some_and(|w| !(w > 0.0)) {
            return Err(Error::Config("LSH bucket width must be positive".into()));
        }
        if self.lsh_tables == 0 || self.lsh_hashes == 0 {
            return Err(Error::Config("LSH needs at least one table and one hash".into()));
        }
        if self.precluster_k_rows == Some(0) || self.precluster_k_cols == Some(0) {
            return Err(Error::Config("pre-cluster counts must be at least 1".into()));
        }
        self.engine_config::<f64>().validate()
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub normalize: f64,
    pub smooth: f64,
    pub precluster: f64,
    pub engine: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.normalize + self.smooth + self.precluster + self.engine
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<F> {
    /// The normalized input, before smoothing.
    pub normalized: ExplanationMatrix<F>,
    /// The matrix the engine optimized.
    pub working: ExplanationMatrix<F>,
    pub initial: Option<Clustering>,
    pub result: EngineResult<F>,
    pub timings: StageTimings,
}

fn default_k(len: usize, live: usize) -> usize {
    ((len as f64).sqrt().ceil() as usize).clamp(1, MAX_DEFAULT_K).min(live.max(1))
}

fn spectral_config<F: Scalar>(m: &ExplanationMatrix<F>, config: &PipelineConfig) -> SpectralConfig {
    let live_rows = m.data().row_sums().iter().filter(|&&d| d > F::zero()).count();
    let live_cols = m.data().col_sums().iter().filter(|&&d| d > F::zero()).count();
    SpectralConfig {
        k_rows: config
            .precluster_k_rows
            .unwrap_or_else(|| default_k(m.n_rows(), live_rows)),
        k_cols: config
            .precluster_k_cols
            .unwrap_or_else(|| default_k(m.n_cols(), live_cols)),
        ..SpectralConfig::for_shape(m.n_rows(), m.n_cols(), config.seed)
    }
}

/// Runs the configured stages on an already normalized matrix.
pub fn run_normalized<F: Scalar>(normalized: ExplanationMatrix<F>, config: &PipelineConfig) -> Result<PipelineOutput<F>> {
    config.validate()?;
    let mut timings = StageTimings::default();
    let smooth = |m: &ExplanationMatrix<F>, timings: &mut StageTimings| -> Result<ExplanationMatrix<F>> {
        let t = Instant::now();
        let out = if config.smooth {
            knee::smooth(m, F::of(config.sensitivity))?
        } else {
            m.clone()
        };
        timings.smooth = t.elapsed().as_secs_f64();
        Ok(out)
    };
    let precluster = |m: &ExplanationMatrix<F>, timings: &mut StageTimings| -> Result<Option<Clustering>> {
        let t = Instant::now();
        let out = if config.precluster {
            Some(spectral::precluster(m, &spectral_config(m, config))?)
        } else {
            None
        };
        timings.precluster = t.elapsed().as_secs_f64();
        Ok(out)
    };
    let (working, initial) = match config.order {
        StageOrder::SmoothFirst => {
            let w = smooth(&normalized, &mut timings)?;
            let init = precluster(&w, &mut timings)?;
            (w, init)
        }
        StageOrder::PreclusterFirst => {
            let init = precluster(&normalized, &mut timings)?;
            (smooth(&normalized, &mut timings)?, init)
        }
    };
    let t = Instant::now();
    let engine_config = config.engine_config::<F>();
    let result = match &initial {
        Some(init) => engine::summarize_from(&working, init, &engine_config)?,
        None => engine::summarize(&working, &engine_config)?,
    };
    timings.engine = t.elapsed().as_secs_f64();
    Ok(PipelineOutput {
        normalized,
        working,
        initial,
        result,
        timings,
    })
}

/// Normalizes `raw` and runs the configured stages.
pub fn run_pipeline<F: Scalar>(raw: &RawExplanation<F>, config: &PipelineConfig) -> Result<PipelineOutput<F>> {
    config.validate()?;
    let t = Instant::now();
    let normalized = raw.normalized(config.normalize)?;
    let elapsed = t.elapsed().as_secs_f64();
    let mut out = run_normalized(normalized, config)?;
    out.timings.normalize = elapsed;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_example;

    #[test]
    fn worked_example_defaults() {
        let raw = RawExplanation::from(&worked_example::<f64>());
        for seed in 0..5 {
            let out = run_pipeline(&raw, &PipelineConfig { seed, ..Default::default() }).unwrap();
            assert_eq!(
                out.result.clustering,
                Clustering::from_labels(&[0, 0, 1, 1], &[0, 0, 1, 1]),
                "seed {seed}"
            );
            assert!(out.timings.total() >= 0.0);
        }
    }

    #[test]
    fn stages_can_be_skipped() {
        let raw = RawExplanation::from(&worked_example::<f64>());
        let config = PipelineConfig {
            smooth: false,
            precluster: false,
            ..Default::default()
        };
        let out = run_pipeline(&raw, &config).unwrap();
        assert!(out.initial.is_none());
        assert_eq!(out.working, out.normalized);
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = PipelineConfig {
            lsh_width: Some(0.5),
            order: StageOrder::PreclusterFirst,
            ..Default::default()
        };
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), config);
    }

    #[test]
    fn rejects_bad_width() {
        let config = PipelineConfig {
            lsh_width: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }
}
