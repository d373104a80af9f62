//! Causal diagrams over categorical variables.
//!
//! An [`Admg`] holds directed edges between endogenous nodes and an explicit
//! list of latent (exogenous) variables. Bidirected edges are sugar for a
//! latent with two children. After construction every endogenous node has at
//! least one latent parent: nodes without a declared latent receive an
//! implicit dedicated one named `U_<node>`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Default ceiling on the domain product `d_i` used by the cardinality bound.
pub const DEFAULT_MAX_DOMAIN_PRODUCT: u64 = 1 << 24;

/// Largest number of categories a single variable may have; codes are `u8`.
pub const MAX_CATEGORIES: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("{at}: syntax error: {msg}")]
    Syntax { at: Location, msg: String },
    #[error("{at}: unknown variable `{name}`")]
    UnknownVariable { at: Location, name: String },
    #[error("{at}: duplicate edge {parent} -> {child}")]
    DuplicateEdge {
        at: Location,
        parent: String,
        child: String,
    },
    #[error("{at}: self-loop on `{name}`")]
    SelfLoop { at: Location, name: String },
    #[error("{at}: duplicate declaration of `{name}`")]
    Duplicate { at: Location, name: String },
    #[error("directed cycle detected: {0}")]
    Cycle(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("latent `{latent}`: cardinality {given} is below the minimum {required}")]
    CardinalityBelowBound {
        latent: String,
        given: usize,
        required: usize,
    },
    #[error("latent `{latent}`: domain product exceeds the limit {limit}")]
    CardinalityOverflow { latent: String, limit: u64 },
    #[error("unknown latent `{0}`")]
    UnknownLatent(String),
    #[error("invalid knowledge constraints: {0}")]
    InvalidConstraints(String),
    #[error("no candidate diagram survives constraints")]
    EmptyClass,
    #[error("graphs in an equivalence class must share one schema")]
    SchemaMismatch,
}

/// Where in the input an error was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Api,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Api => f.write_str("input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub labels: Vec<String>,
}

/// Ordered list of categorical variables; codes are positions in `labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSchema {
    vars: Vec<Variable>,
    index: HashMap<String, usize>,
}

impl VariableSchema {
    pub fn new(vars: Vec<Variable>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(vars.len());
        for (i, v) in vars.iter().enumerate() {
            if !is_identifier(&v.name) {
                return Err(GraphError::InvalidSchema(format!(
                    "`{}` is not a valid identifier",
                    v.name
                )));
            }
            if index.insert(v.name.clone(), i).is_some() {
                return Err(GraphError::InvalidSchema(format!(
                    "variable `{}` declared twice",
                    v.name
                )));
            }
            if v.labels.len() < 2 {
                return Err(GraphError::InvalidSchema(format!(
                    "variable `{}` needs at least two categories",
                    v.name
                )));
            }
            if v.labels.len() > MAX_CATEGORIES {
                return Err(GraphError::InvalidSchema(format!(
                    "variable `{}` has more than {MAX_CATEGORIES} categories",
                    v.name
                )));
            }
            let distinct: HashSet<&String> = v.labels.iter().collect();
            if distinct.len() != v.labels.len() {
                return Err(GraphError::InvalidSchema(format!(
                    "variable `{}` repeats a category label",
                    v.name
                )));
            }
        }
        Ok(Self { vars, index })
    }

    /// Every variable binary with labels `0` and `1`.
    pub fn binary<I, S>(names: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            names
                .into_iter()
                .map(|n| Variable {
                    name: n.into(),
                    labels: vec!["0".into(), "1".into()],
                })
                .collect(),
        )
    }

    /// Parses `name: label0, label1, ...` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut vars = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let at = Location::Line(lineno + 1);
            let (name, rest) = line.split_once(':').ok_or_else(|| GraphError::Syntax {
                at,
                msg: "expected `name: label, label, ...`".into(),
            })?;
            let labels: Vec<String> = rest
                .split(',')
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            vars.push(Variable {
                name: name.trim().to_string(),
                labels,
            });
        }
        Self::new(vars)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn var(&self, i: usize) -> &Variable {
        &self.vars[i]
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.vars[i].labels.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Variable> {
        self.vars.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentVar {
    pub name: String,
    /// Node indices, sorted.
    pub children: Vec<usize>,
    pub cardinality: Cardinality,
    /// True for the dedicated latents added during canonicalization.
    pub implicit: bool,
}

/// How latent cardinalities are chosen when a graph is analyzed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CardinalityPlan {
    /// Applied to every explicitly declared latent without a per-latent value.
    pub declared: Option<usize>,
    pub per_latent: BTreeMap<String, usize>,
}

/// Acyclic directed mixed graph with explicit latents.
///
/// Nodes are addressed by their position (`0..node_count()`), which follows
/// the order of first mention in the source.
#[derive(Debug, Clone)]
pub struct Admg {
    schema: Arc<VariableSchema>,
    names: Vec<String>,
    vars: Vec<usize>,
    node_index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    latents: Vec<LatentVar>,
    latent_parents: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl PartialEq for Admg {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.names == other.names
            && self.parents == other.parents
            && self.latents == other.latents
    }
}

/// One latent declaration for [`Admg::new`].
#[derive(Debug, Clone)]
pub struct LatentSpec<'a> {
    pub name: &'a str,
    pub children: Vec<&'a str>,
    pub cardinality: Cardinality,
}

impl<'a> LatentSpec<'a> {
    pub fn auto(name: &'a str, children: &[&'a str]) -> Self {
        Self {
            name,
            children: children.to_vec(),
            cardinality: Cardinality::Auto,
        }
    }
}

impl Admg {
    /// Builds a graph from names.
    pub fn new(
        schema: Arc<VariableSchema>,
        nodes: &[&str],
        edges: &[(&str, &str)],
        latents: &[LatentSpec<'_>],
    ) -> Result<Self, GraphError> {
        let mut b = Builder::new(schema);
        for n in nodes {
            b.node(n, Location::Api, false)?;
        }
        for (p, c) in edges {
            b.edge(p, c, Location::Api)?;
        }
        for l in latents {
            b.latent(l.name, &l.children, l.cardinality, Location::Api)?;
        }
        b.finish()
    }

    pub fn schema(&self) -> &Arc<VariableSchema> {
        &self.schema
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.node_index.get(name).copied()
    }

    /// Schema index of a node.
    pub fn schema_var(&self, node: usize) -> usize {
        self.vars[node]
    }

    pub fn domain_size(&self, node: usize) -> usize {
        self.schema.cardinality(self.vars[node])
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn latents(&self) -> &[LatentVar] {
        &self.latents
    }

    /// Latent indices feeding a node, ascending.
    pub fn latent_parents(&self, node: usize) -> &[usize] {
        &self.latent_parents[node]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parents[child].contains(&parent)
    }

    pub fn has_edge_named(&self, parent: &str, child: &str) -> bool {
        match (self.node(parent), self.node(child)) {
            (Some(p), Some(c)) => self.has_edge(p, c),
            _ => false,
        }
    }

    /// Directed edges as (parent, child) node pairs, ordered by child then parent.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
    }

    /// Proper descendants of `node` through directed edges.
    pub fn descendants(&self, node: usize) -> Vec<bool> {
        reach(node, &self.children)
    }

    /// Proper ancestors of `node` through directed edges.
    pub fn ancestors(&self, node: usize) -> Vec<bool> {
        reach(node, &self.parents)
    }

    /// Maximal sets of nodes connected by shared latents.
    pub fn c_components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut uf = UnionFind::new(n);
        for l in &self.latents {
            for w in l.children.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            by_root.entry(uf.find(v)).or_default().push(v);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }

    /// The c-component covering latent `latent`.
    pub fn component_of_latent(&self, latent: usize) -> Vec<usize> {
        let anchor = self.latents[latent].children[0];
        self.c_components()
            .into_iter()
            .find(|c| c.contains(&anchor))
            .expect("every node lies in some component")
    }

    /// The domain product `d_i` over the c-component of a latent together
    /// with the observed parents of its members.
    pub fn domain_product(&self, latent: usize, max_product: u64) -> Result<u64, GraphError> {
        let comp = self.component_of_latent(latent);
        let mut members = vec![false; self.node_count()];
        for &v in &comp {
            members[v] = true;
            for &p in &self.parents[v] {
                members[p] = true;
            }
        }
        let mut d: u64 = 1;
        for (v, _) in members.iter().enumerate().filter(|(_, m)| **m) {
            d = d
                .checked_mul(self.domain_size(v) as u64)
                .filter(|&x| x <= max_product)
                .ok_or_else(|| GraphError::CardinalityOverflow {
                    latent: self.latents[latent].name.clone(),
                    limit: max_product,
                })?;
        }
        Ok(d)
    }

    /// Minimum exogenous cardinality `K_i = d_i + 1` for a latent.
    pub fn exogenous_cardinality(&self, latent: usize, max_product: u64) -> Result<usize, GraphError> {
        Ok(self.domain_product(latent, max_product)? as usize + 1)
    }

    /// Resolves every latent's cardinality. Explicit values (from the file or
    /// the plan) below the minimum are rejected.
    pub fn resolve_cardinalities(
        &self,
        plan: &CardinalityPlan,
        max_product: u64,
    ) -> Result<Vec<usize>, GraphError> {
        for name in plan.per_latent.keys() {
            if !self.latents.iter().any(|l| &l.name == name) {
                return Err(GraphError::UnknownLatent(name.clone()));
            }
        }
        self.latents
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let required = self.exogenous_cardinality(i, max_product)?;
                let chosen = plan
                    .per_latent
                    .get(&l.name)
                    .copied()
                    .or(if l.implicit { None } else { plan.declared })
                    .or(match l.cardinality {
                        Cardinality::Fixed(k) => Some(k),
                        Cardinality::Auto => None,
                    });
                match chosen {
                    None => Ok(required),
                    Some(k) if k >= required => Ok(k),
                    Some(k) => Err(GraphError::CardinalityBelowBound {
                        latent: l.name.clone(),
                        given: k,
                        required,
                    }),
                }
            })
            .collect()
    }
}

fn reach(start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<usize> = adj[start].clone();
    while let Some(v) = stack.pop() {
        if !seen[v] {
            seen[v] = true;
            stack.extend_from_slice(&adj[v]);
        }
    }
    seen
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

struct Builder {
    schema: Arc<VariableSchema>,
    names: Vec<String>,
    node_index: HashMap<String, usize>,
    declared: HashSet<String>,
    edges: Vec<(usize, usize)>,
    latents: Vec<LatentVar>,
    bidirected: usize,
}

impl Builder {
    fn new(schema: Arc<VariableSchema>) -> Self {
        Self {
            schema,
            names: Vec::new(),
            node_index: HashMap::new(),
            declared: HashSet::new(),
            edges: Vec::new(),
            latents: Vec::new(),
            bidirected: 0,
        }
    }

    fn node(&mut self, name: &str, at: Location, explicit: bool) -> Result<usize, GraphError> {
        if explicit && !self.declared.insert(name.to_string()) {
            return Err(GraphError::Duplicate {
                at,
                name: name.into(),
            });
        }
        if let Some(&i) = self.node_index.get(name) {
            return Ok(i);
        }
        if self.schema.index_of(name).is_none() {
            return Err(GraphError::UnknownVariable {
                at,
                name: name.into(),
            });
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.node_index.insert(name.to_string(), i);
        Ok(i)
    }

    fn edge(&mut self, p: &str, c: &str, at: Location) -> Result<(), GraphError> {
        let pi = self.node(p, at, false)?;
        let ci = self.node(c, at, false)?;
        if pi == ci {
            return Err(GraphError::SelfLoop { at, name: p.into() });
        }
        if self.edges.contains(&(pi, ci)) {
            return Err(GraphError::DuplicateEdge {
                at,
                parent: p.into(),
                child: c.into(),
            });
        }
        self.edges.push((pi, ci));
        Ok(())
    }

    fn latent(
        &mut self,
        name: &str,
        children: &[&str],
        cardinality: Cardinality,
        at: Location,
    ) -> Result<(), GraphError> {
        if !is_identifier(name) {
            return Err(GraphError::Syntax {
                at,
                msg: format!("`{name}` is not a valid latent name"),
            });
        }
        if self.latents.iter().any(|l| l.name == name) || self.schema.index_of(name).is_some() {
            return Err(GraphError::Duplicate {
                at,
                name: name.into(),
            });
        }
        if children.is_empty() {
            return Err(GraphError::Syntax {
                at,
                msg: format!("latent `{name}` has no children"),
            });
        }
        if let Cardinality::Fixed(0) = cardinality {
            return Err(GraphError::Syntax {
                at,
                msg: "cardinality must be positive".into(),
            });
        }
        let mut idx = Vec::with_capacity(children.len());
        for c in children {
            let i = self.node(c, at, false)?;
            if idx.contains(&i) {
                return Err(GraphError::Syntax {
                    at,
                    msg: format!("latent `{name}` lists `{c}` twice"),
                });
            }
            idx.push(i);
        }
        idx.sort_unstable();
        self.latents.push(LatentVar {
            name: name.into(),
            children: idx,
            cardinality,
            implicit: false,
        });
        Ok(())
    }

    fn bidirected(&mut self, a: &str, b: &str, at: Location) -> Result<(), GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop { at, name: a.into() });
        }
        self.bidirected += 1;
        let mut name = format!("B{}_{a}_{b}", self.bidirected);
        while self.latents.iter().any(|l| l.name == name) {
            name.push('_');
        }
        self.latent(&name, &[a, b], Cardinality::Auto, at)
    }

    fn finish(mut self) -> Result<Admg, GraphError> {
        let n = self.names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(p, c) in &self.edges {
            parents[c].push(p);
            children[p].push(c);
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
        }
        let topo = topological_sort(&parents, &children).map_err(|cycle| {
            GraphError::Cycle(
                cycle
                    .iter()
                    .map(|&i| self.names[i].as_str())
                    .collect::<Vec<_>>()
                    .join(" -> "),
            )
        })?;

        let mut covered = vec![false; n];
        for l in &self.latents {
            for &c in &l.children {
                covered[c] = true;
            }
        }
        for (v, &cov) in covered.iter().enumerate() {
            if !cov {
                let mut name = format!("U_{}", self.names[v]);
                while self.latents.iter().any(|l| l.name == name) {
                    name.push('_');
                }
                self.latents.push(LatentVar {
                    name,
                    children: vec![v],
                    cardinality: Cardinality::Auto,
                    implicit: true,
                });
            }
        }
        let mut latent_parents = vec![Vec::new(); n];
        for (li, l) in self.latents.iter().enumerate() {
            for &c in &l.children {
                latent_parents[c].push(li);
            }
        }
        let vars = self
            .names
            .iter()
            .map(|nm| self.schema.index_of(nm).expect("checked on insert"))
            .collect();
        Ok(Admg {
            schema: self.schema,
            names: self.names,
            vars,
            node_index: self.node_index,
            parents,
            children,
            latents: self.latents,
            latent_parents,
            topo,
        })
    }
}

/// Kahn's algorithm with smallest-index tie breaking; on failure returns a cycle.
fn topological_sort(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Walk parent links among the leftover nodes until one repeats.
    let mut v = (0..n).find(|&v| indeg[v] > 0).expect("leftover node");
    let mut path = Vec::new();
    let mut pos = HashMap::new();
    loop {
        if let Some(&start) = pos.get(&v) {
            let mut cycle: Vec<usize> = path[start..].to_vec();
            cycle.reverse();
            cycle.push(cycle[0]);
            return Err(cycle);
        }
        pos.insert(v, path.len());
        path.push(v);
        v = *parents[v].iter().find(|&&p| indeg[p] > 0).expect("cyclic parent");
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses the line-oriented graph format:
///
/// ```text
/// node A
/// edge A -> Y
/// bidirected A <-> Y
/// latent U1 k=auto -> A Y
/// ```
pub fn parse_graph(text: &str, schema: Arc<VariableSchema>) -> Result<Admg, GraphError> {
    let mut b = Builder::new(schema);
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let at = Location::Line(lineno + 1);
        let syntax = |msg: &str| GraphError::Syntax {
            at,
            msg: msg.to_string(),
        };
        let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match keyword {
            "node" => {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 1 {
                    return Err(syntax("expected `node <name>`"));
                }
                b.node(toks[0], at, true)?;
            }
            "edge" => {
                let (p, c) = split_arrow(rest, "->").ok_or_else(|| syntax("expected `edge <parent> -> <child>`"))?;
                b.edge(p, c, at)?;
            }
            "bidirected" => {
                let (x, y) = split_arrow(rest, "<->").ok_or_else(|| syntax("expected `bidirected <a> <-> <b>`"))?;
                b.bidirected(x, y, at)?;
            }
            "latent" => {
                let (head, tail) = rest
                    .split_once("->")
                    .ok_or_else(|| syntax("expected `latent <name> [k=<int>|k=auto] -> <child>...`"))?;
                let head: Vec<&str> = head.split_whitespace().collect();
                let (name, card) = match head.as_slice() {
                    [name] => (*name, Cardinality::Auto),
                    [name, k] => {
                        let value = k.strip_prefix("k=").ok_or_else(|| syntax("expected `k=<int>` or `k=auto`"))?;
                        let card = if value == "auto" {
                            Cardinality::Auto
                        } else {
                            Cardinality::Fixed(
                                value
                                    .parse()
                                    .map_err(|_| syntax(&format!("invalid cardinality `{value}`")))?,
                            )
                        };
                        (*name, card)
                    }
                    _ => return Err(syntax("expected `latent <name> [k=<int>|k=auto] -> <child>...`")),
                };
                let children: Vec<&str> = tail.split_whitespace().collect();
                b.latent(name, &children, card, at)?;
            }
            other => return Err(syntax(&format!("unknown directive `{other}`"))),
        }
    }
    b.finish()
}

fn split_arrow<'a>(s: &'a str, arrow: &str) -> Option<(&'a str, &'a str)> {
    let (a, b) = s.split_once(arrow)?;
    let (a, b) = (a.trim(), b.trim());
    if a.is_empty() || b.is_empty() || a.contains(char::is_whitespace) || b.contains(char::is_whitespace) {
        return None;
    }
    // `<->` must not be accepted where `->` is expected.
    if arrow == "->" && a.ends_with('<') {
        return None;
    }
    Some((a, b))
}

/// Scans a graph file for every variable name it mentions, in order.
pub fn mentioned_names(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in text.lines() {
        let line = strip_comment(raw);
        let mut toks = line.split_whitespace();
        let keyword = toks.next();
        let rest: Vec<&str> = toks.collect();
        let names: Vec<&str> = match keyword {
            Some("node") | Some("edge") | Some("bidirected") => rest,
            Some("latent") => line
                .split_once("->")
                .map(|(_, t)| t.split_whitespace().collect())
                .unwrap_or_default(),
            _ => Vec::new(),
        };
        for n in names {
            if is_identifier(n) && !out.iter().any(|o| o == n) {
                out.push(n.to_string());
            }
        }
    }
    out
}

/// Domain knowledge used to prune candidate diagrams.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeConstraints {
    pub forbidden: Vec<(String, String)>,
    pub required: Vec<(String, String)>,
    /// Earlier tiers may point into later ones, never the reverse.
    pub tiers: Vec<Vec<String>>,
}

impl KnowledgeConstraints {
    pub fn new(
        forbidden: Vec<(String, String)>,
        required: Vec<(String, String)>,
        tiers: Vec<Vec<String>>,
    ) -> Result<Self, GraphError> {
        for e in &required {
            if forbidden.contains(e) {
                return Err(GraphError::InvalidConstraints(format!(
                    "{} -> {} is both required and forbidden",
                    e.0, e.1
                )));
            }
        }
        let mut seen = HashSet::new();
        for n in tiers.iter().flatten() {
            if !seen.insert(n) {
                return Err(GraphError::InvalidConstraints(format!("`{n}` appears in more than one tier")));
            }
        }
        Ok(Self {
            forbidden,
            required,
            tiers,
        })
    }

    /// Parses `forbid p -> c`, `require p -> c` and `tier a b : c d : e` lines.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut forbidden = Vec::new();
        let mut required = Vec::new();
        let mut tiers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let at = Location::Line(lineno + 1);
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match keyword {
                "forbid" | "require" => {
                    let (p, c) = split_arrow(rest, "->").ok_or_else(|| GraphError::Syntax {
                        at,
                        msg: format!("expected `{keyword} <parent> -> <child>`"),
                    })?;
                    let e = (p.to_string(), c.to_string());
                    if keyword == "forbid" {
                        forbidden.push(e);
                    } else {
                        required.push(e);
                    }
                }
                "tier" => {
                    if !tiers.is_empty() {
                        return Err(GraphError::Syntax {
                            at,
                            msg: "only one `tier` line is allowed".into(),
                        });
                    }
                    for group in rest.split(':') {
                        let names: Vec<String> = group.split_whitespace().map(str::to_string).collect();
                        if names.is_empty() {
                            return Err(GraphError::Syntax {
                                at,
                                msg: "empty tier".into(),
                            });
                        }
                        tiers.push(names);
                    }
                }
                other => {
                    return Err(GraphError::Syntax {
                        at,
                        msg: format!("unknown directive `{other}`"),
                    })
                }
            }
        }
        Self::new(forbidden, required, tiers)
    }

    pub fn is_empty(&self) -> bool {
        self.forbidden.is_empty() && self.required.is_empty() && self.tiers.is_empty()
    }

    fn tier_of(&self, name: &str) -> Option<usize> {
        self.tiers.iter().position(|t| t.iter().any(|n| n == name))
    }

    /// Human-readable reasons the graph violates these constraints.
    pub fn violations(&self, g: &Admg) -> Vec<String> {
        let mut out = Vec::new();
        for (p, c) in &self.forbidden {
            if g.has_edge_named(p, c) {
                out.push(format!("forbidden edge {p} -> {c} present"));
            }
        }
        for (p, c) in &self.required {
            if !g.has_edge_named(p, c) {
                out.push(format!("required edge {p} -> {c} missing"));
            }
        }
        for (p, c) in g.edges() {
            let (pn, cn) = (g.name(p), g.name(c));
            if let (Some(tp), Some(tc)) = (self.tier_of(pn), self.tier_of(cn)) {
                if tp > tc {
                    out.push(format!("edge {pn} -> {cn} points into an earlier tier"));
                }
            }
        }
        out
    }

    pub fn admits(&self, g: &Admg) -> bool {
        self.violations(g).is_empty()
    }
}

/// Candidate diagrams sharing one schema, each with an identifier.
#[derive(Debug, Clone)]
pub struct EquivalenceClass {
    graphs: Vec<(String, Arc<Admg>)>,
}

impl EquivalenceClass {
    pub fn new(graphs: Vec<(String, Arc<Admg>)>) -> Result<Self, GraphError> {
        let first = graphs.first().ok_or(GraphError::EmptyClass)?;
        if graphs.iter().any(|(_, g)| g.schema() != first.1.schema()) {
            return Err(GraphError::SchemaMismatch);
        }
        Ok(Self { graphs })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Arc<Admg>)> {
        self.graphs.iter()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.graphs.iter().map(|(id, _)| id.as_str()).collect()
    }
}

/// Keeps the graphs that violate no constraint, preserving order.
pub fn filter_equivalence_class(
    class: &EquivalenceClass,
    k: &KnowledgeConstraints,
) -> Result<EquivalenceClass, GraphError> {
    let kept: Vec<_> = class.graphs.iter().filter(|(_, g)| k.admits(g)).cloned().collect();
    if kept.is_empty() {
        return Err(GraphError::EmptyClass);
    }
    Ok(EquivalenceClass { graphs: kept })
}
