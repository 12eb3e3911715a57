//! Randomized bottom-up co-clustering.
//!
//! Every row and column starts in its own cluster (or in a supplied
//! initial clustering) on an *active* list. Each step pops a random active
//! cluster on one side, scores a merge with every candidate on that side
//! (all other live clusters, or the LSH top-k), and either merges it into the
//! best candidate when that lowers the total cost or moves it to the
//! *finalized* list. Row and column steps alternate until both active lists
//! are empty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{self, Clustering, CostBreakdown, LossKind, Side};
use crate::error::{Error, Result};
use crate::lsh::{self, build_lsh_table, topk_neighbors, LshConfig, LshTable};
use crate::matrix::ExplanationMatrix;
use crate::scalar::Scalar;
use crate::stats::CoClusterStats;

pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_K_NEIGHBORS: usize = 10;
pub const TRACE_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    #[default]
    Exhaustive,
    Lsh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LshParams<F> {
    pub n_tables: usize,
    pub hashes_per_table: usize,
    /// `None` picks the width from the indexed vectors.
    pub bucket_width: Option<F>,
}

impl<F> Default for LshParams<F> {
    fn default() -> Self {
        Self {
            n_tables: lsh::DEFAULT_TABLES,
            hashes_per_table: lsh::DEFAULT_HASHES,
            bucket_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig<F> {
    pub beta_rows: F,
    pub beta_cols: F,
    pub seed: u64,
    pub candidate_mode: CandidateMode,
    pub k_neighbors: usize,
    pub max_iterations: Option<usize>,
    pub loss: LossKind,
    pub lsh: LshParams<F>,
    pub trace: bool,
}

impl<F: Scalar> Default for EngineConfig<F> {
    fn default() -> Self {
        Self {
            beta_rows: F::of(DEFAULT_BETA),
            beta_cols: F::of(DEFAULT_BETA),
            seed: 0,
            candidate_mode: CandidateMode::Exhaustive,
            k_neighbors: DEFAULT_K_NEIGHBORS,
            max_iterations: None,
            loss: LossKind::Marginalized,
            lsh: LshParams::default(),
            trace: false,
        }
    }
}

impl<F: Scalar> EngineConfig<F> {
    pub fn validate(&self) -> Result<()> {
        cost::check_betas(self.beta_rows, self.beta_cols)?;
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be at least 1".into()));
        }
        Ok(())
    }

    fn beta(&self, side: Side) -> F {
        match side {
            Side::Rows => self.beta_rows,
            Side::Cols => self.beta_cols,
        }
    }
}

/// One popped cluster and what happened to it. Cluster ids here are the
/// engine's internal slot numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub side: Side,
    pub popped: u32,
    pub best: Option<u32>,
    pub delta: f64,
    pub accepted: bool,
    pub candidates: usize,
    /// Total cost after the step.
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct EngineResult<F> {
    pub clustering: Clustering,
    pub cost: CostBreakdown<F>,
    pub trace: Vec<TraceEvent>,
    pub evaluations: u64,
    pub accepted_merges: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<F> {
    pub popped: usize,
    pub best: Option<(usize, F)>,
    pub merged: bool,
}

/// Removes and returns a uniformly chosen element.
pub fn random_pop<T, R: Rng + ?Sized>(list: &mut Vec<T>, rng: &mut R) -> Result<T> {
    if list.is_empty() {
        return Err(Error::EmptyPool);
    }
    let k = rng.gen_range(0..list.len());
    Ok(list.swap_remove(k))
}

pub struct EngineState<'a, F: Scalar> {
    matrix: &'a ExplanationMatrix<F>,
    config: EngineConfig<F>,
    stats: CoClusterStats<F>,
    active: [Vec<usize>; 2],
    finalized: [Vec<usize>; 2],
    rng: ChaCha8Rng,
    lsh: [Option<LshTable<F>>; 2],
    loss: F,
    iterations: usize,
    evaluations: u64,
    accepted: usize,
    trace: Vec<TraceEvent>,
}

impl<'a, F: Scalar> EngineState<'a, F> {
    pub fn new(matrix: &'a ExplanationMatrix<F>, config: EngineConfig<F>) -> Result<Self> {
        let initial = Clustering::singletons(matrix.n_rows(), matrix.n_cols());
        Self::with_initial(matrix, &initial, config)
    }

    pub fn with_initial(
        matrix: &'a ExplanationMatrix<F>,
        initial: &Clustering,
        config: EngineConfig<F>,
    ) -> Result<Self> {
        config.validate()?;
        initial.validate(matrix.n_rows(), matrix.n_cols())?;
        let stats = CoClusterStats::from_clustering(matrix, initial, config.loss);
        let loss = stats.total_loss();
        let mut lsh: [Option<LshTable<F>>; 2] = [None, None];
        if config.candidate_mode == CandidateMode::Lsh {
            for side in [Side::Rows, Side::Cols] {
                let vectors = match side {
                    Side::Rows => matrix.data().clone(),
                    Side::Cols => matrix.data().transpose(),
                };
                let width = config
                    .lsh
                    .bucket_width
                    .unwrap_or_else(|| lsh::default_width(&vectors));
                let lsh_config = LshConfig {
                    n_tables: config.lsh.n_tables,
                    hashes_per_table: config.lsh.hashes_per_table,
                    bucket_width: width,
                    seed: config.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(side.index() as u64 + 1)),
                };
                let mut table = build_lsh_table(&vectors, lsh_config)?;
                let slots: Vec<u32> = initial
                    .positions(side, vectors.n_rows())
                    .into_iter()
                    .map(|s| s as u32)
                    .collect();
                table.assign(&slots)?;
                lsh[side.index()] = Some(table);
            }
        }
        Ok(Self {
            matrix,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            active: [
                (0..initial.rows.len()).collect(),
                (0..initial.cols.len()).collect(),
            ],
            finalized: [Vec::new(), Vec::new()],
            config,
            stats,
            lsh,
            loss,
            iterations: 0,
            evaluations: 0,
            accepted: 0,
            trace: Vec::new(),
        })
    }

    pub fn active(&self, side: Side) -> &[usize] {
        &self.active[side.index()]
    }

    pub fn finalized(&self, side: Side) -> &[usize] {
        &self.finalized[side.index()]
    }

    pub fn members(&self, side: Side, slot: usize) -> Option<&[usize]> {
        self.stats.members(side, slot)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn loss(&self) -> F {
        self.loss
    }

    pub fn total_cost(&self) -> F {
        cost::model_cost(
            self.stats.n_live(Side::Rows),
            self.stats.n_live(Side::Cols),
            self.config.beta_rows,
            self.config.beta_cols,
        ) + self.loss
    }

    pub fn clustering(&self) -> Clustering {
        self.stats.clustering()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn random_pop(&mut self, side: Side) -> Result<usize> {
        random_pop(&mut self.active[side.index()], &mut self.rng)
    }

    fn candidates(&self, side: Side, popped: usize) -> Result<Vec<usize>> {
        match self.config.candidate_mode {
            CandidateMode::Exhaustive => Ok(self
                .stats
                .live_slots(side)
                .filter(|&s| s != popped)
                .collect()),
            CandidateMode::Lsh => {
                let table = self.lsh[side.index()].as_ref().expect("tables built in LSH mode");
                let members = self.stats.members(side, popped).expect("popped slot is live");
                let mut ids: Vec<usize> = topk_neighbors(
                    members,
                    |id| id as usize != popped && self.stats.is_live(side, id as usize),
                    table,
                    self.config.k_neighbors,
                )?
                .into_iter()
                .map(|(id, _)| id as usize)
                .collect();
                ids.sort_unstable();
                Ok(ids)
            }
        }
    }

    /// Pops one active cluster on `side` and merges or finalizes it.
    pub fn step(&mut self, side: Side) -> Result<StepOutcome<F>> {
        let popped = self.random_pop(side)?;
        let candidates = self.candidates(side, popped)?;
        let beta = self.config.beta(side);
        let mut best: Option<(usize, F, F)> = None;
        for &c in &candidates {
            let growth = self.stats.merge_loss_increase(side, popped, c);
            let delta = beta - growth;
            self.evaluations += 1;
            if best.is_none_or(|(_, d, _)| delta > d) {
                best = Some((c, delta, growth));
            }
        }
        let merged = matches!(best, Some((_, d, _)) if d > F::zero());
        if merged {
            let (target, _, growth) = best.expect("merge implies a candidate");
            self.stats.merge(side, target, popped);
            if let Some(table) = self.lsh[side.index()].as_mut() {
                table.on_merge(popped as u32, target as u32)?;
            }
            self.loss = self.loss + growth;
            self.accepted += 1;
        } else {
            self.finalized[side.index()].push(popped);
        }
        if self.config.trace && self.trace.len() < TRACE_CAP {
            self.trace.push(TraceEvent {
                side,
                popped: popped as u32,
                best: best.map(|(c, _, _)| c as u32),
                delta: best.map_or(0.0, |(_, d, _)| d.as_f64()),
                accepted: merged,
                candidates: candidates.len(),
                total: self.total_cost().as_f64(),
            });
        }
        Ok(StepOutcome {
            popped,
            best: best.map(|(c, d, _)| (c, d)),
            merged,
        })
    }

    /// Alternates row and column steps until both active lists are empty.
    pub fn run(mut self) -> Result<EngineResult<F>> {
        while !self.active[0].is_empty() || !self.active[1].is_empty() {
            if let Some(cap) = self.config.max_iterations {
                if self.iterations >= cap {
                    return Err(Error::IterationCap {
                        iterations: self.iterations,
                        partial: Box::new(self.clustering()),
                    });
                }
            }
            for side in [Side::Rows, Side::Cols] {
                if !self.active[side.index()].is_empty() {
                    self.step(side)?;
                }
            }
            self.iterations += 1;
        }
        let clustering = self.clustering();
        let cost = cost::total_cost_with(
            self.matrix,
            &clustering,
            self.config.beta_rows,
            self.config.beta_cols,
            self.config.loss,
        )?;
        Ok(EngineResult {
            clustering,
            cost,
            trace: self.trace,
            evaluations: self.evaluations,
            accepted_merges: self.accepted,
            iterations: self.iterations,
        })
    }
}

/// Runs the engine from singleton clusters.
pub fn summarize<F: Scalar>(matrix: &ExplanationMatrix<F>, config: &EngineConfig<F>) -> Result<EngineResult<F>> {
    EngineState::new(matrix, config.clone())?.run()
}

/// Runs the engine from a given clustering, e.g. a spectral pre-clustering.
pub fn summarize_from<F: Scalar>(
    matrix: &ExplanationMatrix<F>,
    initial: &Clustering,
    config: &EngineConfig<F>,
) -> Result<EngineResult<F>> {
    EngineState::with_initial(matrix, initial, config.clone())?.run()
}
