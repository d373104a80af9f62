//! Discrete structural causal models evaluated by exact enumeration over the
//! joint latent grid.
//!
//! An [`ScmLayout`] fixes the graph and latent cardinalities; an [`ScmState`]
//! adds the exogenous probability vectors and dense function tables. A table
//! for node `V` is indexed by a mixed-radix encoding of its inputs: latent
//! parents occupy the low digits, endogenous parents the high digits.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use thiserror::Error;

use crate::graph::Admg;

/// Default ceiling on the number of joint latent configurations.
pub const DEFAULT_MAX_GRID: usize = 10_000_000;

const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error("conditioning event has zero probability")]
    ZeroMass,
    #[error("joint latent grid has {size} states, above the limit {limit}")]
    GridTooLarge { size: u128, limit: usize },
    #[error("invalid model state: {0}")]
    InvalidState(String),
    #[error("invalid counterfactual term: {0}")]
    InvalidTerm(String),
}

/// Graph plus resolved latent cardinalities, with precomputed table strides.
#[derive(Debug)]
pub struct ScmLayout {
    graph: Arc<Admg>,
    cards: Vec<usize>,
    domains: Vec<usize>,
    parent_strides: Vec<Vec<(usize, usize)>>,
    latent_strides: Vec<Vec<(usize, usize)>>,
    table_len: Vec<usize>,
    grid_size: usize,
}

impl ScmLayout {
    pub fn new(graph: Arc<Admg>, cards: Vec<usize>, max_grid: usize) -> Result<Arc<Self>, ScmError> {
        if cards.len() != graph.latents().len() {
            return Err(ScmError::InvalidState(format!(
                "{} cardinalities for {} latents",
                cards.len(),
                graph.latents().len()
            )));
        }
        if cards.contains(&0) {
            return Err(ScmError::InvalidState("latent cardinality must be positive".into()));
        }
        let size: u128 = cards.iter().map(|&k| k as u128).product();
        if size > max_grid as u128 {
            return Err(ScmError::GridTooLarge { size, limit: max_grid });
        }
        let n = graph.node_count();
        let domains: Vec<usize> = (0..n).map(|v| graph.domain_size(v)).collect();
        let mut parent_strides = Vec::with_capacity(n);
        let mut latent_strides = Vec::with_capacity(n);
        let mut table_len = Vec::with_capacity(n);
        for v in 0..n {
            let mut stride = 1usize;
            let mut ls = Vec::new();
            for &l in graph.latent_parents(v) {
                ls.push((l, stride));
                stride *= cards[l];
            }
            let mut ps = Vec::new();
            for &p in graph.parents(v) {
                ps.push((p, stride));
                stride *= domains[p];
            }
            latent_strides.push(ls);
            parent_strides.push(ps);
            table_len.push(stride);
        }
        Ok(Arc::new(Self {
            graph,
            cards,
            domains,
            parent_strides,
            latent_strides,
            table_len,
            grid_size: size as usize,
        }))
    }

    pub fn graph(&self) -> &Arc<Admg> {
        &self.graph
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn node_count(&self) -> usize {
        self.domains.len()
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn table_len(&self, node: usize) -> usize {
        self.table_len[node]
    }

    pub fn parent_strides(&self, node: usize) -> &[(usize, usize)] {
        &self.parent_strides[node]
    }

    /// Splits a grid index into per-latent values; the last latent varies fastest.
    pub fn decode_cell(&self, mut cell: usize, digits: &mut [usize]) {
        for (d, &k) in digits.iter_mut().zip(&self.cards).rev() {
            *d = cell % k;
            cell /= k;
        }
    }

    pub fn encode_cell(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.cards).fold(0, |acc, (&d, &k)| acc * k + d)
    }

    /// Latent part of each node's table index for the given latent values.
    pub fn latent_offsets(&self, digits: &[usize], out: &mut [usize]) {
        for (o, ls) in out.iter_mut().zip(&self.latent_strides) {
            *o = ls.iter().map(|&(l, s)| digits[l] * s).sum();
        }
    }

    /// Endogenous-parent part of a node's table index for a full configuration.
    pub fn parent_offset(&self, node: usize, values: &[u8]) -> usize {
        self.parent_strides[node]
            .iter()
            .map(|&(p, s)| values[p] as usize * s)
            .sum()
    }

    /// Mixed-radix key of a full endogenous configuration.
    pub fn config_key(&self, values: &[u8]) -> u64 {
        values
            .iter()
            .zip(&self.domains)
            .fold(0u64, |acc, (&v, &d)| acc * d as u64 + v as u64)
    }

    /// Uniformly random function tables.
    pub fn random_tables<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<u8>> {
        (0..self.node_count())
            .map(|v| {
                let d = self.domains[v];
                (0..self.table_len[v]).map(|_| rng.gen_range(0..d) as u8).collect()
            })
            .collect()
    }

    pub fn uniform_q(&self) -> Vec<Vec<f64>> {
        self.cards.iter().map(|&k| vec![1.0 / k as f64; k]).collect()
    }
}

/// Observational solution `V(u)` and probability `q(u)` for every grid cell.
#[derive(Debug)]
pub struct GridCache {
    values: Vec<u8>,
    prob: Vec<f64>,
    width: usize,
}

impl GridCache {
    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn values(&self, cell: usize) -> &[u8] {
        &self.values[cell * self.width..(cell + 1) * self.width]
    }

    pub fn prob(&self, cell: usize) -> f64 {
        self.prob[cell]
    }
}

/// Input substitution for one mechanism: `child` reads `value` in place of
/// `parent`'s actual value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeOverride {
    pub child: usize,
    pub parent: usize,
    pub value: u8,
}

/// A fully parameterized SCM.
#[derive(Debug)]
pub struct ScmState {
    layout: Arc<ScmLayout>,
    q: Vec<Vec<f64>>,
    tables: Vec<Vec<u8>>,
    grid: OnceLock<GridCache>,
}

impl Clone for ScmState {
    fn clone(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            q: self.q.clone(),
            tables: self.tables.clone(),
            grid: OnceLock::new(),
        }
    }
}

impl ScmState {
    pub fn new(layout: Arc<ScmLayout>, q: Vec<Vec<f64>>, tables: Vec<Vec<u8>>) -> Result<Self, ScmError> {
        if q.len() != layout.cards.len() {
            return Err(ScmError::InvalidState("one probability vector per latent expected".into()));
        }
        for (i, (qi, &k)) in q.iter().zip(&layout.cards).enumerate() {
            if qi.len() != k {
                return Err(ScmError::InvalidState(format!("q[{i}] has length {} not {k}", qi.len())));
            }
            if qi.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(ScmError::InvalidState(format!("q[{i}] has a negative or NaN entry")));
            }
            let s: f64 = qi.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(ScmError::InvalidState(format!("q[{i}] sums to {s}")));
            }
        }
        if tables.len() != layout.node_count() {
            return Err(ScmError::InvalidState("one function table per node expected".into()));
        }
        for (v, t) in tables.iter().enumerate() {
            if t.len() != layout.table_len[v] {
                return Err(ScmError::InvalidState(format!(
                    "table for `{}` has {} entries, expected {}",
                    layout.graph.name(v),
                    t.len(),
                    layout.table_len[v]
                )));
            }
            if t.iter().any(|&c| c as usize >= layout.domains[v]) {
                return Err(ScmError::InvalidState(format!(
                    "table for `{}` outputs a code outside its domain",
                    layout.graph.name(v)
                )));
            }
        }
        Ok(Self {
            layout,
            q,
            tables,
            grid: OnceLock::new(),
        })
    }

    pub fn layout(&self) -> &Arc<ScmLayout> {
        &self.layout
    }

    pub fn graph(&self) -> &Arc<Admg> {
        &self.layout.graph
    }

    pub fn q(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn tables(&self) -> &[Vec<u8>] {
        &self.tables
    }

    /// Solves the (possibly intervened) model for one unit.
    ///
    /// `interventions[v] = Some(c)` forces node `v` to `c`; `edges` substitutes
    /// a parent's value inside a single mechanism.
    pub fn solve(&self, lat_off: &[usize], interventions: &[Option<u8>], edges: &[EdgeOverride], out: &mut [u8]) {
        let layout = &*self.layout;
        for &v in layout.graph.topological_order() {
            if let Some(c) = interventions[v] {
                out[v] = c;
                continue;
            }
            let mut idx = lat_off[v];
            for &(p, stride) in &layout.parent_strides[v] {
                let val = if edges.is_empty() {
                    out[p]
                } else {
                    edges
                        .iter()
                        .find(|e| e.child == v && e.parent == p)
                        .map_or(out[p], |e| e.value)
                };
                idx += val as usize * stride;
            }
            out[v] = self.tables[v][idx];
        }
    }

    /// Endogenous values at latent configuration `u` under `interventions`.
    pub fn evaluate_unit(&self, u: &[usize], interventions: &[Option<u8>]) -> Vec<u8> {
        let n = self.layout.node_count();
        let mut lat_off = vec![0; n];
        self.layout.latent_offsets(u, &mut lat_off);
        let mut out = vec![0; n];
        self.solve(&lat_off, interventions, &[], &mut out);
        out
    }

    /// Probability of a single latent configuration under `q`.
    pub fn cell_prob(&self, digits: &[usize]) -> f64 {
        digits.iter().zip(&self.q).map(|(&d, q)| q[d]).product()
    }

    /// Cached observational solution over the whole grid.
    pub fn grid(&self) -> &GridCache {
        self.grid.get_or_init(|| self.build_grid())
    }

    fn build_grid(&self) -> GridCache {
        let layout = &*self.layout;
        let n = layout.node_count();
        let size = layout.grid_size;
        let mut values = vec![0u8; size * n];
        let mut prob = vec![0f64; size];
        let none = vec![None; n];
        let fill = |start: usize, vals: &mut [u8], probs: &mut [f64]| {
            let mut digits = vec![0; layout.cards.len()];
            let mut lat_off = vec![0; n];
            for (i, (v, p)) in vals.chunks_exact_mut(n.max(1)).zip(probs.iter_mut()).enumerate() {
                layout.decode_cell(start + i, &mut digits);
                layout.latent_offsets(&digits, &mut lat_off);
                *p = self.cell_prob(&digits);
                self.solve(&lat_off, &none, &[], v);
            }
        };
        crate::parallel::fill_chunks(&mut values, &mut prob, n, fill);
        GridCache { values, prob, width: n }
    }

    /// Calls `f(cell, prob, latent offsets, observed values)` for every cell.
    pub fn for_each_cell(&self, mut f: impl FnMut(usize, f64, &[usize], &[u8])) {
        let grid = self.grid();
        let layout = &*self.layout;
        let mut digits = vec![0; layout.cards.len()];
        let mut lat_off = vec![0; layout.node_count()];
        for cell in 0..grid.len() {
            layout.decode_cell(cell, &mut digits);
            layout.latent_offsets(&digits, &mut lat_off);
            f(cell, grid.prob(cell), &lat_off, grid.values(cell));
        }
    }

    /// Human-readable parameter dump; see the README for the format.
    pub fn dump(&self) -> String {
        let g = &self.layout.graph;
        let mut s = String::from("# cfbound scm dump v1\n");
        for (l, q) in g.latents().iter().zip(&self.q) {
            let _ = write!(s, "latent {} k={}:", l.name, q.len());
            for p in q {
                let _ = write!(s, " {p:?}");
            }
            s.push('\n');
        }
        for v in 0..g.node_count() {
            let pa: Vec<&str> = g.parents(v).iter().map(|&p| g.name(p)).collect();
            let la: Vec<&str> = g.latent_parents(v).iter().map(|&l| g.latents()[l].name.as_str()).collect();
            let _ = write!(s, "table {} [{} | {}]:", g.name(v), pa.join(","), la.join(","));
            for c in &self.tables[v] {
                let _ = write!(s, " {c}");
            }
            s.push('\n');
        }
        s
    }
}

/// A variable under a (possibly nested) intervention, e.g. `W_{A=0}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Potential {
    pub var: usize,
    pub subscript: Vec<(usize, Source)>,
}

/// Where an intervened variable's value comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Const(u8),
    /// Evaluated at the same unit before the outer intervention applies.
    Nested(Potential),
}

impl Potential {
    pub fn factual(var: usize) -> Self {
        Self { var, subscript: Vec::new() }
    }

    pub fn under(var: usize, subscript: Vec<(usize, Source)>) -> Self {
        Self { var, subscript }
    }

    fn validate(&self, g: &Admg) -> Result<(), ScmError> {
        let n = g.node_count();
        if self.var >= n {
            return Err(ScmError::InvalidTerm(format!("node index {} out of range", self.var)));
        }
        let mut seen = vec![false; n];
        for (v, src) in &self.subscript {
            if *v >= n {
                return Err(ScmError::InvalidTerm(format!("node index {v} out of range")));
            }
            if *v == self.var {
                return Err(ScmError::InvalidTerm(format!("`{}` appears in its own subscript", g.name(*v))));
            }
            if std::mem::replace(&mut seen[*v], true) {
                return Err(ScmError::InvalidTerm(format!("`{}` assigned twice", g.name(*v))));
            }
            match src {
                Source::Const(c) if *c as usize >= g.domain_size(*v) => {
                    return Err(ScmError::InvalidTerm(format!("code {c} outside the domain of `{}`", g.name(*v))))
                }
                Source::Const(_) => {}
                Source::Nested(inner) => {
                    if inner.var >= n || g.domain_size(inner.var) != g.domain_size(*v) {
                        return Err(ScmError::InvalidTerm(format!(
                            "nested source for `{}` has an incompatible domain",
                            g.name(*v)
                        )));
                    }
                    inner.validate(g)?;
                }
            }
        }
        Ok(())
    }

    /// Value at one unit. `observed` is the factual solution for that unit.
    pub fn eval(&self, scm: &ScmState, lat_off: &[usize], observed: &[u8]) -> u8 {
        if self.subscript.is_empty() {
            return observed[self.var];
        }
        let n = observed.len();
        let mut interventions = vec![None; n];
        for (v, src) in &self.subscript {
            interventions[*v] = Some(match src {
                Source::Const(c) => *c,
                Source::Nested(inner) => inner.eval(scm, lat_off, observed),
            });
        }
        let mut out = vec![0; n];
        scm.solve(lat_off, &interventions, &[], &mut out);
        out[self.var]
    }
}

/// The event `outcome = value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualTerm {
    pub outcome: Potential,
    pub value: u8,
}

impl CounterfactualTerm {
    pub fn new(outcome: Potential, value: u8) -> Self {
        Self { outcome, value }
    }

    pub fn validate(&self, g: &Admg) -> Result<(), ScmError> {
        self.outcome.validate(g)?;
        if self.value as usize >= g.domain_size(self.outcome.var) {
            return Err(ScmError::InvalidTerm(format!(
                "code {} outside the domain of `{}`",
                self.value,
                g.name(self.outcome.var)
            )));
        }
        Ok(())
    }

    pub fn holds(&self, scm: &ScmState, lat_off: &[usize], observed: &[u8]) -> bool {
        self.outcome.eval(scm, lat_off, observed) == self.value
    }
}

/// Conjunction of `variable = code` literals over factual values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Event {
    literals: Vec<(usize, u8)>,
}

impl Event {
    pub fn new(literals: Vec<(usize, u8)>) -> Result<Self, ScmError> {
        let mut seen = std::collections::HashSet::new();
        for (v, _) in &literals {
            if !seen.insert(*v) {
                return Err(ScmError::InvalidTerm("variable repeated in event".into()));
            }
        }
        Ok(Self { literals })
    }

    pub fn always() -> Self {
        Self::default()
    }

    pub fn literals(&self) -> &[(usize, u8)] {
        &self.literals
    }

    pub fn holds(&self, values: &[u8]) -> bool {
        self.literals.iter().all(|&(v, c)| values[v] == c)
    }

    pub fn validate(&self, g: &Admg) -> Result<(), ScmError> {
        for &(v, c) in &self.literals {
            if v >= g.node_count() || c as usize >= g.domain_size(v) {
                return Err(ScmError::InvalidTerm("event literal outside the graph's domains".into()));
            }
        }
        Ok(())
    }
}

/// `P(term | given)` by exact enumeration over the latent grid.
pub fn ctf_probability(scm: &ScmState, term: &CounterfactualTerm, given: &Event) -> Result<f64, ScmError> {
    Ok(ctf_probabilities(scm, std::slice::from_ref(term), given)?[0])
}

/// Several conditional probabilities sharing one conditioning event, in one pass.
pub fn ctf_probabilities(scm: &ScmState, terms: &[CounterfactualTerm], given: &Event) -> Result<Vec<f64>, ScmError> {
    let g = scm.graph();
    for t in terms {
        t.validate(g)?;
    }
    given.validate(g)?;
    let mut num = vec![0.0; terms.len()];
    let mut den = 0.0;
    scm.for_each_cell(|_, p, lat_off, observed| {
        if p == 0.0 || !given.holds(observed) {
            return;
        }
        den += p;
        for (t, acc) in terms.iter().zip(num.iter_mut()) {
            if t.holds(scm, lat_off, observed) {
                *acc += p;
            }
        }
    });
    if den <= 0.0 {
        return Err(ScmError::ZeroMass);
    }
    Ok(num.into_iter().map(|x| x / den).collect())
}
