//! Command implementations behind the `cfbound` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cfbound::bounds::{aggregate, combine_tv, aggregate_samples, BoundReport, DEFAULT_BINS};
use cfbound::data::{load_csv, RecodeSpec};
use cfbound::graph::{
    filter_equivalence_class, mentioned_names, parse_graph, Admg, CardinalityPlan, EquivalenceClass,
    KnowledgeConstraints, VariableSchema, DEFAULT_MAX_DOMAIN_PRODUCT,
};
use cfbound::measures::{parse_measure, tv_components, Measure, MeasureQuery};
use cfbound::parallel::{map_ordered, with_jobs, Execution};
use cfbound::sampler::{
    convergence_trace, run_chain, ChainOutput, SamplerConfig, TraceTarget, DEFAULT_ALPHA, DEFAULT_BURN_IN,
    DEFAULT_SAMPLES, DEFAULT_TRACE_THRESHOLD,
};
use cfbound::scm::DEFAULT_MAX_GRID;
use cfbound::synth::{coverage_experiment, SynthSpec, DEFAULT_TRUE_CARDINALITY, MEDIATION_SKELETON, CONFOUNDED_ANALYSIS};

pub const MAX_GRID_ENV: &str = "CFBOUND_MAX_GRID";

/// Grid limit from the environment, falling back to the default.
pub fn max_grid_from_env() -> Result<usize> {
    match std::env::var(MAX_GRID_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{MAX_GRID_ENV} must be a positive integer, got `{v}`")),
        Err(_) => Ok(DEFAULT_MAX_GRID),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn graph_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Summary of each graph: nodes, edges, latents with `d` and the minimum
/// cardinality `K = d + 1`, c-components and, given constraints, whether the
/// graph is admitted.
pub fn cmd_graph_info(graphs: &[PathBuf], schema: Option<&Path>, knowledge: Option<&Path>) -> Result<String> {
    let schema_text = schema.map(read).transpose()?;
    let knowledge = match knowledge {
        Some(p) => Some(KnowledgeConstraints::parse(&read(p)?).with_context(|| format!("invalid knowledge file {}", p.display()))?),
        None => None,
    };
    let mut s = String::new();
    for (gi, path) in graphs.iter().enumerate() {
        let text = read(path)?;
        let schema = match &schema_text {
            Some(t) => VariableSchema::parse(t)?,
            None => VariableSchema::binary(mentioned_names(&text))?,
        };
        let g = parse_graph(&text, Arc::new(schema)).with_context(|| format!("in {}", path.display()))?;
        if gi > 0 {
            s.push('\n');
        }
        writeln!(s, "graph {}", graph_id(path))?;
        let nodes: Vec<String> = (0..g.node_count())
            .map(|v| format!("{}({})", g.name(v), g.domain_size(v)))
            .collect();
        writeln!(s, "nodes: {}", nodes.join(" "))?;
        let edges: Vec<String> = g.edges().map(|(p, c)| format!("{}->{}", g.name(p), g.name(c))).collect();
        writeln!(s, "edges: {}", if edges.is_empty() { "-".into() } else { edges.join(" ") })?;
        for (i, l) in g.latents().iter().enumerate() {
            let children: Vec<&str> = l.children.iter().map(|&c| g.name(c)).collect();
            let d = g.domain_product(i, DEFAULT_MAX_DOMAIN_PRODUCT)?;
            writeln!(
                s,
                "{}: d={}, K={} (-> {}){}",
                l.name,
                d,
                d + 1,
                children.join(" "),
                if l.implicit { " implicit" } else { "" }
            )?;
        }
        for (i, c) in g.c_components().iter().enumerate() {
            let names: Vec<&str> = c.iter().map(|&v| g.name(v)).collect();
            writeln!(s, "c-component {}: {{{}}}", i + 1, names.join(", "))?;
        }
        if let Some(k) = &knowledge {
            let v = k.violations(&g);
            if v.is_empty() {
                writeln!(s, "knowledge: admitted")?;
            } else {
                writeln!(s, "knowledge: rejected ({})", v.join("; "))?;
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditConfig {
    pub data: PathBuf,
    pub recode: PathBuf,
    pub graphs: Vec<PathBuf>,
    pub knowledge: Option<PathBuf>,
    pub queries: Vec<String>,
    pub delta: f64,
    pub burn_in: usize,
    pub samples: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Cardinality for every declared latent; implicit latents keep their minimum.
    pub k: Option<usize>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub dump_chain: bool,
    pub protected: String,
    pub outcome: String,
    pub max_grid: usize,
    pub sequential: bool,
}

impl AuditConfig {
    pub fn new(data: PathBuf, recode: PathBuf, graphs: Vec<PathBuf>, queries: Vec<String>, out: PathBuf) -> Self {
        Self {
            data,
            recode,
            graphs,
            knowledge: None,
            queries,
            delta: cfbound::bounds::DEFAULT_DELTA,
            burn_in: DEFAULT_BURN_IN,
            samples: DEFAULT_SAMPLES,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            k: None,
            out,
            jobs: None,
            dump_chain: false,
            protected: "A".into(),
            outcome: "Y".into(),
            max_grid: DEFAULT_MAX_GRID,
            sequential: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphSummary {
    pub id: String,
    pub n_samples: usize,
    pub skipped: usize,
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentSummary {
    pub mean: f64,
    pub ci: [f64; 2],
}

/// Per-sample `SE + IE - DE` for a TV query, computed on the same chains.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TvComponents {
    pub se: ComponentSummary,
    pub ie: ComponentSummary,
    pub de: ComponentSummary,
    pub combined: ComponentSummary,
    /// Largest `|TV - (SE + IE - DE)|` over all samples.
    pub max_identity_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportDoc {
    pub query: String,
    pub graphs: Vec<String>,
    pub n_samples: usize,
    pub mean: f64,
    pub delta: f64,
    pub ci: [f64; 2],
    pub worst: [f64; 2],
    pub skipped: usize,
    pub trace_gap: Option<f64>,
    pub per_graph: Vec<GraphSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub components: Option<TvComponents>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainDiagnosticsDoc {
    pub graph: String,
    pub chain: u64,
    pub cardinalities: BTreeMap<String, usize>,
    pub support_misses: u64,
    pub refit_conflicts: u64,
    pub posteriors_built: u64,
    pub posterior_reuses: u64,
    pub trace_mean: Option<f64>,
    pub trace_empirical: Option<f64>,
    pub trace_gap: Option<f64>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a AuditConfig,
    records: usize,
    graphs_kept: Vec<String>,
    graphs_rejected: BTreeMap<String, Vec<String>>,
    chain_seeds: Vec<(String, u64, u64)>,
    sha256: BTreeMap<String, String>,
    diagnostics: Vec<ChainDiagnosticsDoc>,
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub reports: Vec<ReportDoc>,
    pub diagnostics: Vec<ChainDiagnosticsDoc>,
    pub chains: Vec<ChainOutput>,
    pub graph_ids: Vec<String>,
}

fn component(r: &BoundReport) -> ComponentSummary {
    ComponentSummary {
        mean: r.mean,
        ci: [r.ci_low, r.ci_high],
    }
}

fn parse_queries(cfg: &AuditConfig, g: &Admg) -> Result<Vec<MeasureQuery>> {
    cfg.queries
        .iter()
        .map(|q| parse_measure(q, g, &cfg.protected, &cfg.outcome).map_err(Into::into))
        .collect()
}

/// Loads data and graphs, runs one chain per admitted graph, aggregates every
/// query and writes the report files into `cfg.out`.
pub fn cmd_audit(cfg: &AuditConfig) -> Result<AuditOutcome> {
    if cfg.graphs.is_empty() {
        bail!("at least one --graph is required");
    }
    if cfg.queries.is_empty() {
        bail!("at least one --query is required");
    }
    if !(0.0..1.0).contains(&cfg.delta) {
        bail!("--delta must lie in [0, 1), got {}", cfg.delta);
    }
    let recode_text = read(&cfg.recode)?;
    let recode = RecodeSpec::parse(&recode_text).context("invalid recode file")?;
    let schema = Arc::new(recode.derived_schema()?);
    let data_bytes = fs::read(&cfg.data).with_context(|| format!("cannot read {}", cfg.data.display()))?;
    let data = load_csv(&String::from_utf8_lossy(&data_bytes), &recode, schema.clone())
        .with_context(|| format!("cannot load {}", cfg.data.display()))?;

    let mut sha256 = BTreeMap::new();
    sha256.insert("data".to_string(), sha256_hex(&data_bytes));
    sha256.insert("recode".to_string(), sha256_hex(recode_text.as_bytes()));
    let mut graphs = Vec::new();
    for path in &cfg.graphs {
        let text = read(path)?;
        let id = graph_id(path);
        if graphs.iter().any(|(g, _)| g == &id) {
            bail!("two graph files share the identifier `{id}`");
        }
        sha256.insert(format!("graph:{id}"), sha256_hex(text.as_bytes()));
        let g = parse_graph(&text, schema.clone()).with_context(|| format!("invalid graph {}", path.display()))?;
        graphs.push((id, Arc::new(g)));
    }
    let class = EquivalenceClass::new(graphs)?;
    let mut rejected = BTreeMap::new();
    let class = match &cfg.knowledge {
        Some(path) => {
            let text = read(path)?;
            sha256.insert("knowledge".to_string(), sha256_hex(text.as_bytes()));
            let k = KnowledgeConstraints::parse(&text).context("invalid knowledge file")?;
            for (id, g) in class.iter() {
                let v = k.violations(g);
                if !v.is_empty() {
                    rejected.insert(id.clone(), v);
                }
            }
            filter_equivalence_class(&class, &k).context("every graph violates the knowledge constraints")?
        }
        None => class,
    };

    // Requested queries first; hidden TV components follow.
    let mut per_graph_queries = Vec::new();
    let mut tv_extra: Vec<Option<[usize; 3]>> = Vec::new();
    for (gi, (_, g)) in class.iter().enumerate() {
        let mut qs = parse_queries(cfg, g)?;
        let n = qs.len();
        for i in 0..n {
            let extra = match qs[i].measure {
                Measure::Tv { a0, a1, y } => {
                    let base = qs.len();
                    qs.extend(tv_components(qs[i].attribute, qs[i].outcome, a0, a1, y));
                    Some([base, base + 1, base + 2])
                }
                _ => None,
            };
            if gi == 0 {
                tv_extra.push(extra);
            }
        }
        per_graph_queries.push(qs);
    }
    let labels: Vec<String> = {
        let (_, g0) = class.iter().next().expect("nonempty class");
        per_graph_queries[0][..cfg.queries.len()]
            .iter()
            .map(|q| q.display(g0).to_string())
            .collect()
    };

    let plan = CardinalityPlan {
        declared: cfg.k,
        per_latent: BTreeMap::new(),
    };
    let entries: Vec<(usize, String, Arc<Admg>)> = class
        .iter()
        .enumerate()
        .map(|(i, (id, g))| (i, id.clone(), g.clone()))
        .collect();
    let exec = if cfg.sequential { Execution::Sequential } else { Execution::Parallel };
    let outputs: Vec<Result<ChainOutput>> = with_jobs(cfg.jobs, || {
        map_ordered(&entries, exec, |_, (i, _, g)| {
            let trace = match (g.node(&cfg.protected), g.node(&cfg.outcome)) {
                (Some(attribute), Some(outcome)) => Some(TraceTarget { attribute, outcome, a: 0, y: 1 }),
                _ => None,
            };
            let scfg = SamplerConfig {
                alpha: cfg.alpha,
                burn_in: cfg.burn_in,
                samples: cfg.samples,
                cardinalities: plan.clone(),
                seed: cfg.seed,
                chain: *i as u64,
                max_grid: cfg.max_grid,
                trace,
                ..Default::default()
            };
            run_chain(&data, g.clone(), &per_graph_queries[*i], &scfg).map_err(anyhow::Error::from)
        })
    });
    let chains: Vec<ChainOutput> = outputs
        .into_iter()
        .zip(&entries)
        .map(|(r, (_, id, _))| r.with_context(|| format!("chain for graph `{id}` failed")))
        .collect::<Result<_>>()?;
    let ids: Vec<String> = entries.iter().map(|(_, id, _)| id.clone()).collect();

    let diagnostics: Vec<ChainDiagnosticsDoc> = entries
        .iter()
        .zip(&chains)
        .map(|((i, id, g), c)| {
            let summary = match (g.node(&cfg.protected), g.node(&cfg.outcome)) {
                (Some(attribute), Some(outcome)) => {
                    let t = TraceTarget { attribute, outcome, a: 0, y: 1 };
                    convergence_trace(c, &data, g, &t, DEFAULT_TRACE_THRESHOLD)?
                }
                _ => None,
            };
            Ok(ChainDiagnosticsDoc {
                graph: id.clone(),
                chain: *i as u64,
                cardinalities: g.latents().iter().map(|l| l.name.clone()).zip(c.cardinalities.iter().copied()).collect(),
                support_misses: c.diagnostics.support_misses,
                refit_conflicts: c.diagnostics.refit_conflicts,
                posteriors_built: c.diagnostics.posteriors_built,
                posterior_reuses: c.diagnostics.posterior_reuses,
                trace_mean: summary.as_ref().map(|s| s.mean),
                trace_empirical: summary.as_ref().map(|s| s.empirical),
                trace_gap: summary.as_ref().map(|s| s.gap),
                converged: summary.as_ref().map(|s| s.converged),
            })
        })
        .collect::<Result<_>>()?;
    let trace_gap = diagnostics
        .iter()
        .filter_map(|d| d.trace_gap)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));

    let mut reports = Vec::new();
    for (qi, label) in labels.iter().enumerate() {
        let b = aggregate(&chains, qi, cfg.delta).with_context(|| format!("cannot aggregate `{label}`"))?;
        let per_graph = ids
            .iter()
            .zip(&chains)
            .zip(&b.per_chain)
            .map(|((id, c), &n)| GraphSummary {
                id: id.clone(),
                n_samples: n,
                skipped: c.skipped(qi),
                skip_reason: c.skip_reasons[qi].clone(),
            })
            .collect();
        let components = match tv_extra[qi] {
            Some([se, ie, de]) => Some(tv_components_doc(&chains, qi, [se, ie, de], cfg.delta)?),
            None => None,
        };
        reports.push(ReportDoc {
            query: label.clone(),
            graphs: ids.clone(),
            n_samples: b.n_samples(),
            mean: b.mean,
            delta: b.delta,
            ci: [b.ci_low, b.ci_high],
            worst: [b.worst_low, b.worst_high],
            skipped: b.skipped,
            trace_gap,
            per_graph,
            components,
        });
        write_histogram(&cfg.out, qi, &b)?;
    }

    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    fs::write(cfg.out.join("report.json"), serde_json::to_string_pretty(&reports)? + "\n")?;
    write_trace(&cfg.out, &ids, &chains)?;
    if cfg.dump_chain {
        for (id, c) in ids.iter().zip(&chains) {
            write_chain_dump(&cfg.out, id, &labels, c)?;
        }
    }
    let manifest = Manifest {
        tool: "cfbound",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        records: data.len(),
        graphs_kept: ids.clone(),
        graphs_rejected: rejected,
        chain_seeds: entries.iter().map(|(i, id, _)| (id.clone(), cfg.seed, *i as u64)).collect(),
        sha256,
        diagnostics: diagnostics.clone(),
    };
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(AuditOutcome {
        reports,
        diagnostics,
        chains,
        graph_ids: ids,
    })
}

fn tv_components_doc(chains: &[ChainOutput], tv: usize, [se, ie, de]: [usize; 3], delta: f64) -> Result<TvComponents> {
    let mut combined = Vec::new();
    let mut gap: f64 = 0.0;
    for c in chains {
        let sum = combine_tv(&c.samples[se], &c.samples[ie], &c.samples[de])?;
        for (t, s) in c.samples[tv].iter().zip(&sum) {
            if let (Some(t), Some(s)) = (t, s) {
                gap = gap.max((t - s).abs());
            }
        }
        combined.push(sum);
    }
    let sets: Vec<&[Option<f64>]> = combined.iter().map(Vec::as_slice).collect();
    Ok(TvComponents {
        se: component(&aggregate(chains, se, delta)?),
        ie: component(&aggregate(chains, ie, delta)?),
        de: component(&aggregate(chains, de, delta)?),
        combined: component(&aggregate_samples(&sets, delta)?),
        max_identity_gap: gap,
    })
}

fn write_histogram(out: &Path, qi: usize, b: &BoundReport) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join(format!("histogram_{qi}.csv")))?;
    w.write_record(["bin_left", "bin_right", "count"])?;
    for (l, r, c) in b.histogram(DEFAULT_BINS) {
        w.write_record([l.to_string(), r.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_trace(out: &Path, ids: &[String], chains: &[ChainOutput]) -> Result<()> {
    let mut w = csv::Writer::from_path(out.join("trace.csv"))?;
    let mut header = vec!["iteration".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    let len = chains.iter().map(|c| c.trace.len()).max().unwrap_or(0);
    for i in 0..len {
        let mut row = vec![(i + 1).to_string()];
        row.extend(chains.iter().map(|c| fmt_opt(c.trace.get(i).copied().flatten())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_chain_dump(out: &Path, id: &str, labels: &[String], c: &ChainOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(out.join(format!("chain_{id}.csv")))?;
    let mut header = vec!["iteration".to_string()];
    header.extend(labels.iter().cloned());
    header.push("trace".into());
    w.write_record(&header)?;
    let tail = c.post_burn_in_trace();
    for i in 0..c.samples.first().map_or(0, Vec::len) {
        let mut row = vec![(c.burn_in + i + 1).to_string()];
        row.extend((0..labels.len()).map(|q| fmt_opt(c.samples[q][i])));
        row.push(fmt_opt(tail.get(i).copied().flatten()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Text printed after an audit: one line per query.
pub fn format_summary(reports: &[ReportDoc]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(
            s,
            "{}: mean={:.4} {:.0}% interval=[{:.4}, {:.4}] worst=[{:.4}, {:.4}] n={} skipped={}",
            r.query,
            r.mean,
            (1.0 - r.delta) * 100.0,
            r.ci[0],
            r.ci[1],
            r.worst[0],
            r.worst[1],
            r.n_samples,
            r.skipped
        );
    }
    s
}

/// Synthetic coverage study settings, read from TOML.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    /// `mediation` or a graph file path relative to the spec.
    #[serde(default = "default_skeleton")]
    pub skeleton: String,
    /// `confounded` or a graph file path relative to the spec.
    #[serde(default = "default_analysis")]
    pub analysis: String,
    #[serde(default = "default_variables")]
    pub variables: Vec<String>,
    #[serde(default = "default_true_k")]
    pub true_cardinality: usize,
    pub records: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    pub k: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_synth_queries")]
    pub queries: Vec<String>,
    #[serde(default = "default_protected")]
    pub protected: String,
    #[serde(default = "default_outcome")]
    pub outcome: String,
}

fn default_skeleton() -> String {
    "mediation".into()
}
fn default_analysis() -> String {
    "confounded".into()
}
fn default_variables() -> Vec<String> {
    ["Z", "A", "W", "Y"].map(String::from).to_vec()
}
fn default_true_k() -> usize {
    DEFAULT_TRUE_CARDINALITY
}
fn default_replications() -> usize {
    20
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_delta() -> f64 {
    cfbound::bounds::DEFAULT_DELTA
}
fn default_synth_queries() -> Vec<String> {
    ["DE(a0=0,a1=1,y=1|a=0)", "IE(a0=0,a1=1,y=1|a=0)", "SE(a0=0,a1=1,y=1)"]
        .map(String::from)
        .to_vec()
}
fn default_protected() -> String {
    "A".into()
}
fn default_outcome() -> String {
    "Y".into()
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummaryDoc {
    pub query: String,
    pub replications: usize,
    pub covered: usize,
    pub coverage: f64,
    pub worst_covered: usize,
    pub mean_width: f64,
}

fn load_graph_ref(reference: &str, builtin: &[(&str, &str)], base: &Path, schema: Arc<VariableSchema>) -> Result<Admg> {
    let text = match builtin.iter().find(|(k, _)| *k == reference) {
        Some((_, t)) => t.to_string(),
        None => read(&base.join(reference))?,
    };
    Ok(parse_graph(&text, schema)?)
}

/// Runs the coverage study described by a TOML spec and writes
/// `coverage.csv` and `summary.json` into `out`.
pub fn cmd_synth(
    spec_path: &Path,
    replications: Option<usize>,
    out: &Path,
    jobs: Option<usize>,
    sequential: bool,
) -> Result<Vec<SynthSummaryDoc>> {
    let mut file: SynthFile =
        toml::from_str(&read(spec_path)?).with_context(|| format!("invalid synth spec {}", spec_path.display()))?;
    if let Some(r) = replications {
        file.replications = r;
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let schema = Arc::new(VariableSchema::binary(file.variables.iter().map(String::as_str))?);
    let builtin = [("mediation", MEDIATION_SKELETON), ("confounded", CONFOUNDED_ANALYSIS)];
    let skeleton = Arc::new(load_graph_ref(&file.skeleton, &builtin, base, schema.clone())?);
    let analysis = Arc::new(load_graph_ref(&file.analysis, &builtin, base, schema)?);
    let queries = file
        .queries
        .iter()
        .map(|q| parse_measure(q, &analysis, &file.protected, &file.outcome))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SynthSpec {
        skeleton,
        true_cardinality: file.true_cardinality,
        records: file.records,
        replications: file.replications,
        seed: file.seed,
    };
    let cfg = SamplerConfig {
        alpha: file.alpha,
        burn_in: file.burn_in,
        samples: file.samples,
        cardinalities: CardinalityPlan {
            declared: file.k,
            per_latent: BTreeMap::new(),
        },
        seed: file.seed,
        max_grid: max_grid_from_env()?,
        ..Default::default()
    };
    let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
    let table = with_jobs(jobs, || coverage_experiment(&spec, analysis, &cfg, &queries, file.delta, exec))?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut w = csv::Writer::from_path(out.join("coverage.csv"))?;
    w.write_record(["replication", "query", "truth", "ci_low", "ci_high", "covered", "width"])?;
    for r in &table.rows {
        w.write_record([
            r.replication.to_string(),
            r.query.clone(),
            r.truth.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            u8::from(r.covered).to_string(),
            r.width().to_string(),
        ])?;
    }
    w.flush()?;
    let summary: Vec<SynthSummaryDoc> = table
        .summary
        .iter()
        .map(|s| SynthSummaryDoc {
            query: s.query.clone(),
            replications: s.replications,
            covered: s.covered,
            coverage: s.rate(),
            worst_covered: s.worst_covered,
            mean_width: s.mean_width,
        })
        .collect();
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}
