//! Bounding counterfactual fairness measures over a class of causal graphs
//! by Gibbs sampling canonical structural causal models.

pub mod bounds;
pub mod data;
pub mod graph;
pub mod measures;
pub mod parallel;
pub mod sampler;
pub mod scm;
pub mod synth;

pub use bounds::{aggregate, BoundReport};
pub use data::{load_csv, Dataset, RecodeSpec};
pub use graph::{parse_graph, Admg, CardinalityPlan, EquivalenceClass, KnowledgeConstraints, VariableSchema};
pub use measures::{eval_measure, parse_measure, Measure, MeasureQuery};
pub use parallel::Execution;
pub use sampler::{run_chain, ChainOutput, SamplerConfig};
pub use scm::{ScmLayout, ScmState};
