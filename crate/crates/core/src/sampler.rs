//! Gibbs sampler over canonical SCMs consistent with a dataset.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::graph::{Admg, CardinalityPlan, GraphError, DEFAULT_MAX_DOMAIN_PRODUCT};
use crate::measures::{eval_measure, MeasureError, MeasureQuery};
use crate::scm::{ScmError, ScmLayout, ScmState, DEFAULT_MAX_GRID};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BURN_IN: usize = 2000;
pub const DEFAULT_SAMPLES: usize = 4000;
pub const DEFAULT_TRACE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// The observational probability tracked every iteration: `P(outcome = y | attribute = a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceTarget {
    pub attribute: usize,
    pub outcome: usize,
    pub a: u8,
    pub y: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub burn_in: usize,
    pub samples: usize,
    pub cardinalities: CardinalityPlan,
    pub seed: u64,
    /// Stream index of this chain under `seed`.
    pub chain: u64,
    pub max_grid: usize,
    pub max_domain_product: u64,
    /// Share one posterior per distinct observed configuration.
    pub memoize: bool,
    pub trace: Option<TraceTarget>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            burn_in: DEFAULT_BURN_IN,
            samples: DEFAULT_SAMPLES,
            cardinalities: CardinalityPlan::default(),
            seed: 0,
            chain: 0,
            max_grid: DEFAULT_MAX_GRID,
            max_domain_product: DEFAULT_MAX_DOMAIN_PRODUCT,
            memoize: true,
            trace: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(SamplerError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.samples == 0 {
            return Err(SamplerError::Config("at least one post-burn-in sample is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainDiagnostics {
    pub support_misses: u64,
    pub refit_conflicts: u64,
    /// Posterior tables built (one per distinct configuration per iteration when memoized).
    pub posteriors_built: u64,
    /// Record draws served from an already built posterior.
    pub posterior_reuses: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// `samples[q][i]` is query `q` at post-burn-in iteration `i`; `None` marks a skipped sample.
    pub samples: Vec<Vec<Option<f64>>>,
    /// First skip reason per query.
    pub skip_reasons: Vec<Option<String>>,
    /// Trace value at every iteration, burn-in included.
    pub trace: Vec<Option<f64>>,
    pub burn_in: usize,
    pub cardinalities: Vec<usize>,
    pub diagnostics: ChainDiagnostics,
}

impl ChainOutput {
    pub fn skipped(&self, query: usize) -> usize {
        self.samples[query].iter().filter(|s| s.is_none()).count()
    }

    pub fn post_burn_in_trace(&self) -> &[Option<f64>] {
        &self.trace[self.burn_in.min(self.trace.len())..]
    }
}

/// Draws from `Dirichlet(theta)` as normalized Gamma variates.
pub fn draw_dirichlet<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = theta
            .iter()
            .map(|&t| Gamma::new(t, 1.0).expect("positive shape").sample(rng))
            .collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 && s.is_finite() {
            return g.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Mutable state of one chain.
pub struct Chain {
    layout: Arc<ScmLayout>,
    rows: Vec<Vec<u8>>,
    /// Distinct configurations and, for each record, its configuration index.
    configs: Vec<Vec<u8>>,
    config_of: Vec<usize>,
    config_index: HashMap<Vec<u8>, usize>,
    state: ScmState,
    assignments: Vec<usize>,
    alpha: f64,
    memoize: bool,
    rng: ChaCha8Rng,
    iteration: usize,
    diagnostics: ChainDiagnostics,
}

impl Chain {
    /// Uniform `q`, random tables, uniform latent draws, then one refit pass.
    pub fn initialize(data: &Dataset, graph: Arc<Admg>, cfg: &SamplerConfig) -> Result<Self, SamplerError> {
        cfg.validate()?;
        let rows = data.project(&graph)?;
        if rows.is_empty() {
            return Err(DataError::NoRecords.into());
        }
        let cards = graph.resolve_cardinalities(&cfg.cardinalities, cfg.max_domain_product)?;
        let layout = ScmLayout::new(graph, cards, cfg.max_grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(cfg.chain);

        let mut config_index: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut configs = Vec::new();
        let config_of = rows
            .iter()
            .map(|r| {
                *config_index.entry(r.clone()).or_insert_with(|| {
                    configs.push(r.clone());
                    configs.len() - 1
                })
            })
            .collect();

        let tables = layout.random_tables(&mut rng);
        let grid = layout.grid_size();
        let assignments: Vec<usize> = (0..rows.len()).map(|_| rng.gen_range(0..grid)).collect();
        let state = ScmState::new(layout.clone(), layout.uniform_q(), tables)?;
        let mut chain = Self {
            layout,
            rows,
            configs,
            config_of,
            config_index,
            state,
            assignments,
            alpha: cfg.alpha,
            memoize: cfg.memoize,
            rng,
            iteration: 0,
            diagnostics: ChainDiagnostics::default(),
        };
        let tables = chain.refit_tables();
        let q = chain.state.q().to_vec();
        chain.state = ScmState::new(chain.layout.clone(), q, tables)?;
        Ok(chain)
    }

    pub fn state(&self) -> &ScmState {
        &self.state
    }

    /// Grid cell of each record's current latent assignment.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn diagnostics(&self) -> &ChainDiagnostics {
        &self.diagnostics
    }

    /// Draws every record's latent cell from `P(u | V^t) ∝ 1[V(u) = V^t] q(u)`.
    pub fn resample_latents(&mut self) {
        let grid = self.state.grid();
        let cells = grid.len();
        if self.memoize {
            // One pass over the grid collects every configuration's support.
            let mut support: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.configs.len()];
            for cell in 0..cells {
                let p = grid.prob(cell);
                if p > 0.0 {
                    if let Some(&c) = self.config_index.get(grid.values(cell)) {
                        support[c].push((cell, p));
                    }
                }
            }
            let cumulative: Vec<(Vec<usize>, Vec<f64>)> = support.into_iter().map(cumulate).collect();
            let mut used = vec![false; self.configs.len()];
            for t in 0..self.rows.len() {
                let c = self.config_of[t];
                if std::mem::replace(&mut used[c], true) {
                    self.diagnostics.posterior_reuses += 1;
                } else {
                    self.diagnostics.posteriors_built += 1;
                }
                let (cells, cum) = &cumulative[c];
                let u: f64 = self.rng.gen();
                match pick(cells, cum, u) {
                    Some(cell) => self.assignments[t] = cell,
                    None => self.diagnostics.support_misses += 1,
                }
            }
        } else {
            for t in 0..self.rows.len() {
                self.diagnostics.posteriors_built += 1;
                let row = &self.rows[t];
                let support: Vec<(usize, f64)> = (0..cells)
                    .filter(|&cell| grid.prob(cell) > 0.0 && grid.values(cell) == row.as_slice())
                    .map(|cell| (cell, grid.prob(cell)))
                    .collect();
                let (cells_t, cum) = cumulate(support);
                let u: f64 = self.rng.gen();
                match pick(&cells_t, &cum, u) {
                    Some(cell) => self.assignments[t] = cell,
                    None => self.diagnostics.support_misses += 1,
                }
            }
        }
    }

    /// Fresh random tables overwritten record by record (first write wins).
    fn refit_tables(&mut self) -> Vec<Vec<u8>> {
        let layout = &*self.layout;
        let n = layout.node_count();
        let mut tables = layout.random_tables(&mut self.rng);
        let mut written: Vec<Vec<bool>> = (0..n).map(|v| vec![false; layout.table_len(v)]).collect();
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.shuffle(&mut self.rng);
        let mut digits = vec![0; layout.cardinalities().len()];
        let mut lat_off = vec![0; n];
        for t in order {
            layout.decode_cell(self.assignments[t], &mut digits);
            layout.latent_offsets(&digits, &mut lat_off);
            let row = &self.rows[t];
            for v in 0..n {
                let idx = lat_off[v] + layout.parent_offset(v, row);
                if written[v][idx] {
                    if tables[v][idx] != row[v] {
                        self.diagnostics.refit_conflicts += 1;
                    }
                } else {
                    tables[v][idx] = row[v];
                    written[v][idx] = true;
                }
            }
        }
        tables
    }

    /// Per-latent occurrence counts of the current assignments.
    pub fn latent_counts(&self) -> Vec<Vec<u64>> {
        let cards = self.layout.cardinalities();
        let mut counts: Vec<Vec<u64>> = cards.iter().map(|&k| vec![0; k]).collect();
        let mut digits = vec![0; cards.len()];
        for &cell in &self.assignments {
            self.layout.decode_cell(cell, &mut digits);
            for (c, &d) in counts.iter_mut().zip(&digits) {
                c[d] += 1;
            }
        }
        counts
    }

    /// Refits the tables and draws `q_i ~ Dirichlet(alpha + counts_i)`.
    pub fn refit_and_draw(&mut self) -> Result<(), SamplerError> {
        let tables = self.refit_tables();
        let counts = self.latent_counts();
        let q = counts
            .iter()
            .map(|c| {
                let theta: Vec<f64> = c.iter().map(|&n| self.alpha + n as f64).collect();
                draw_dirichlet(&theta, &mut self.rng)
            })
            .collect();
        self.state = ScmState::new(self.layout.clone(), q, tables)?;
        Ok(())
    }

    /// One full Gibbs sweep.
    pub fn step(&mut self) -> Result<(), SamplerError> {
        self.resample_latents();
        self.refit_and_draw()?;
        self.iteration += 1;
        Ok(())
    }
}

fn cumulate(support: Vec<(usize, f64)>) -> (Vec<usize>, Vec<f64>) {
    let mut acc = 0.0;
    support
        .into_iter()
        .map(|(cell, p)| {
            acc += p;
            (cell, acc)
        })
        .unzip()
}

fn pick(cells: &[usize], cum: &[f64], u: f64) -> Option<usize> {
    let total = *cum.last()?;
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let target = u * total;
    let i = cum.partition_point(|&c| c <= target).min(cells.len() - 1);
    Some(cells[i])
}

/// `P(outcome = y | attribute = a)` under the current model.
pub fn trace_value(state: &ScmState, target: &TraceTarget) -> Option<f64> {
    let grid = state.grid();
    let (mut num, mut den) = (0.0, 0.0);
    for cell in 0..grid.len() {
        let v = grid.values(cell);
        if v[target.attribute] == target.a {
            let p = grid.prob(cell);
            den += p;
            if v[target.outcome] == target.y {
                num += p;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Runs burn-in plus sampling and evaluates every query after burn-in.
pub fn run_chain(
    data: &Dataset,
    graph: Arc<Admg>,
    queries: &[MeasureQuery],
    cfg: &SamplerConfig,
) -> Result<ChainOutput, SamplerError> {
    for q in queries {
        q.validate(&graph)?;
    }
    let mut chain = Chain::initialize(data, graph, cfg)?;
    let mut samples: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(cfg.samples); queries.len()];
    let mut skip_reasons = vec![None; queries.len()];
    let mut trace = Vec::with_capacity(cfg.burn_in + cfg.samples);
    for i in 0..cfg.burn_in + cfg.samples {
        chain.step()?;
        trace.push(cfg.trace.as_ref().and_then(|t| trace_value(&chain.state, t)));
        if i < cfg.burn_in {
            continue;
        }
        for (qi, q) in queries.iter().enumerate() {
            match eval_measure(&chain.state, q) {
                Ok(v) => samples[qi].push(Some(v)),
                Err(MeasureError::Scm(e @ ScmError::ZeroMass)) => {
                    samples[qi].push(None);
                    skip_reasons[qi].get_or_insert_with(|| e.to_string());
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(ChainOutput {
        samples,
        skip_reasons,
        trace,
        burn_in: cfg.burn_in,
        cardinalities: chain.layout.cardinalities().to_vec(),
        diagnostics: chain.diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub empirical: f64,
    pub gap: f64,
    pub converged: bool,
}

/// Compares the post-burn-in trace with the empirical value of the same
/// probability in `data`. Returns `None` when no trace value is available or
/// the conditioning value never occurs.
pub fn convergence_trace(
    out: &ChainOutput,
    data: &Dataset,
    graph: &Admg,
    target: &TraceTarget,
    threshold: f64,
) -> Result<Option<TraceSummary>, SamplerError> {
    let tail = if out.post_burn_in_trace().is_empty() {
        &out.trace[..]
    } else {
        out.post_burn_in_trace()
    };
    let values: Vec<f64> = tail.iter().flatten().copied().collect();
    if values.is_empty() {
        return Ok(None);
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for row in data.project(graph)? {
        if row[target.attribute] == target.a {
            total += 1;
            hits += usize::from(row[target.outcome] == target.y);
        }
    }
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(summarize_trace(&values, hits as f64 / total as f64, threshold)))
}

/// Mean, range and gap of a trace against a reference value.
pub fn summarize_trace(values: &[f64], empirical: f64, threshold: f64) -> TraceSummary {
    let mean = crate::bounds::shifted_mean(values);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gap = (mean - empirical).abs();
    TraceSummary {
        mean,
        min,
        max,
        empirical,
        gap,
        converged: gap <= threshold,
    }
}
