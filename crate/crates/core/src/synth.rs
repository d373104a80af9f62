//! Random ground-truth SCMs, forward simulation and interval coverage.

use std::sync::Arc;

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use thiserror::Error;

use crate::bounds::{aggregate, BoundError};
use crate::data::{DataError, Dataset};
use crate::graph::{parse_graph, Admg, GraphError, VariableSchema};
use crate::measures::{eval_measure, MeasureError, MeasureQuery};
use crate::parallel::{map_ordered, Execution};
use crate::sampler::{draw_dirichlet, run_chain, SamplerConfig, SamplerError};
use crate::scm::{ScmError, ScmLayout, ScmState, DEFAULT_MAX_GRID};

/// Z -> A, Z -> Y, A -> W, A -> Y, W -> Y with one dedicated latent per node.
pub const MEDIATION_SKELETON: &str = "edge Z -> A\nedge Z -> Y\nedge A -> W\nedge A -> Y\nedge W -> Y\n";
/// The same skeleton with two latents that join all four nodes into one district.
pub const CONFOUNDED_ANALYSIS: &str = "edge Z -> A\nedge Z -> Y\nedge A -> W\nedge A -> Y\nedge W -> Y\n\
                                  latent U1 -> Z A Y\nlatent U2 -> A W Y\n";
pub const DEFAULT_TRUE_CARDINALITY: usize = 4;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub skeleton: Arc<Admg>,
    /// Cardinality of every latent of the true model.
    pub true_cardinality: usize,
    pub records: usize,
    pub replications: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Binary Z, A, W, Y over the default skeleton.
    pub fn mediation(records: usize, replications: usize, seed: u64) -> Self {
        let schema = Arc::new(VariableSchema::binary(["Z", "A", "W", "Y"]).expect("valid names"));
        let skeleton = parse_graph(MEDIATION_SKELETON, schema).expect("valid skeleton");
        Self {
            skeleton: Arc::new(skeleton),
            true_cardinality: DEFAULT_TRUE_CARDINALITY,
            records,
            replications,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.records == 0 {
            return Err(SynthError::Spec("records must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(SynthError::Spec("replications must be at least 1".into()));
        }
        if self.true_cardinality == 0 {
            return Err(SynthError::Spec("true cardinality must be at least 1".into()));
        }
        Ok(())
    }

    /// Generator for replication `r`.
    pub fn rng(&self, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication);
        rng
    }
}

/// `q_i ~ Dirichlet(1)` and uniformly random function tables.
pub fn generate_scm<R: Rng + ?Sized>(skeleton: Arc<Admg>, cardinality: usize, rng: &mut R) -> Result<ScmState, SynthError> {
    let cards = vec![cardinality; skeleton.latents().len()];
    let layout = ScmLayout::new(skeleton, cards, DEFAULT_MAX_GRID)?;
    let q = layout
        .cardinalities()
        .iter()
        .map(|&k| draw_dirichlet(&vec![1.0; k], rng))
        .collect();
    let tables = layout.random_tables(rng);
    Ok(ScmState::new(layout, q, tables)?)
}

/// `records` i.i.d. forward samples of the unintervened model.
pub fn simulate_dataset<R: Rng + ?Sized>(scm: &ScmState, records: usize, rng: &mut R) -> Result<Dataset, SynthError> {
    let g = scm.graph();
    let schema = g.schema().clone();
    let n = g.node_count();
    if schema.len() != n {
        return Err(SynthError::Spec("the skeleton must use every schema variable".into()));
    }
    let dists: Vec<WeightedIndex<f64>> = scm
        .q()
        .iter()
        .map(|q| WeightedIndex::new(q).map_err(|e| SynthError::Spec(e.to_string())))
        .collect::<Result<_, _>>()?;
    let none = vec![None; n];
    let mut u = vec![0; dists.len()];
    let rows: Vec<Vec<u8>> = (0..records)
        .map(|_| {
            for (x, d) in u.iter_mut().zip(&dists) {
                *x = d.sample(rng);
            }
            let values = scm.evaluate_unit(&u, &none);
            let mut row = vec![0; n];
            for v in 0..n {
                row[g.schema_var(v)] = values[v];
            }
            row
        })
        .collect();
    Ok(Dataset::from_rows(schema, &rows)?)
}

/// Exact value of a query under the true model.
pub fn ground_truth(scm: &ScmState, query: &MeasureQuery) -> Result<f64, SynthError> {
    Ok(eval_measure(scm, query)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub replication: usize,
    pub query: String,
    pub truth: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub worst_low: f64,
    pub worst_high: f64,
    pub covered: bool,
    pub worst_covered: bool,
}

impl CoverageRow {
    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSummary {
    pub query: String,
    pub replications: usize,
    pub covered: usize,
    pub worst_covered: usize,
    pub mean_width: f64,
}

impl CoverageSummary {
    pub fn rate(&self) -> f64 {
        self.covered as f64 / self.replications as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    pub summary: Vec<CoverageSummary>,
}

/// Slack for comparing exact truths with sampled endpoints.
const COVER_EPS: f64 = 1e-12;

fn contains(lo: f64, hi: f64, x: f64) -> bool {
    lo - COVER_EPS <= x && x <= hi + COVER_EPS
}

/// Attempts at drawing a true model on which every query is defined.
pub const MAX_TRUTH_DRAWS: usize = 100;

/// Draws true models until every query has a defined value, e.g. the
/// conditioning value of the attribute has positive probability.
fn draw_truth<R: Rng + ?Sized>(spec: &SynthSpec, queries: &[MeasureQuery], rng: &mut R) -> Result<(ScmState, Vec<f64>), SynthError> {
    for _ in 0..MAX_TRUTH_DRAWS {
        let scm = generate_scm(spec.skeleton.clone(), spec.true_cardinality, rng)?;
        match queries.iter().map(|q| ground_truth(&scm, q)).collect::<Result<Vec<_>, _>>() {
            Ok(truths) => return Ok((scm, truths)),
            Err(SynthError::Measure(MeasureError::Scm(ScmError::ZeroMass))) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SynthError::Spec(format!(
        "no true model with defined query values in {MAX_TRUTH_DRAWS} draws"
    )))
}

/// Runs `spec.replications` independent truth/simulate/sample/aggregate rounds.
///
/// Queries are resolved against `analysis`, whose node order must match the
/// skeleton's so the same query can be evaluated on the true model.
pub fn coverage_experiment(
    spec: &SynthSpec,
    analysis: Arc<Admg>,
    cfg: &SamplerConfig,
    queries: &[MeasureQuery],
    delta: f64,
    exec: Execution,
) -> Result<CoverageTable, SynthError> {
    spec.validate()?;
    if analysis.names() != spec.skeleton.names() {
        return Err(SynthError::Spec(
            "analysis graph and skeleton must list the same nodes in the same order".into(),
        ));
    }
    for q in queries {
        q.validate(&spec.skeleton)?;
    }
    let labels: Vec<String> = queries.iter().map(|q| q.display(&analysis).to_string()).collect();
    let reps: Vec<usize> = (0..spec.replications).collect();
    let per_rep = map_ordered(&reps, exec, |_, &r| -> Result<Vec<CoverageRow>, SynthError> {
        let mut rng = spec.rng(r as u64);
        let (truth_scm, truths) = draw_truth(spec, queries, &mut rng)?;
        let data = simulate_dataset(&truth_scm, spec.records, &mut rng)?;
        let chain_cfg = SamplerConfig {
            chain: r as u64,
            ..cfg.clone()
        };
        let out = run_chain(&data, analysis.clone(), queries, &chain_cfg)?;
        let chains = [out];
        queries
            .iter()
            .enumerate()
            .map(|(qi, _)| {
                let truth = truths[qi];
                let b = aggregate(&chains, qi, delta)?;
                Ok(CoverageRow {
                    replication: r,
                    query: labels[qi].clone(),
                    truth,
                    mean: b.mean,
                    ci_low: b.ci_low,
                    ci_high: b.ci_high,
                    worst_low: b.worst_low,
                    worst_high: b.worst_high,
                    covered: contains(b.ci_low, b.ci_high, truth),
                    worst_covered: contains(b.worst_low, b.worst_high, truth),
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    let summary = labels
        .iter()
        .map(|label| {
            let mine: Vec<&CoverageRow> = rows.iter().filter(|r| &r.query == label).collect();
            CoverageSummary {
                query: label.clone(),
                replications: mine.len(),
                covered: mine.iter().filter(|r| r.covered).count(),
                worst_covered: mine.iter().filter(|r| r.worst_covered).count(),
                mean_width: mine.iter().map(|r| r.width()).sum::<f64>() / mine.len().max(1) as f64,
            }
        })
        .collect();
    Ok(CoverageTable { rows, summary })
}
