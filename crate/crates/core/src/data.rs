//! Categorical datasets: CSV loading with recoding rules, empirical
//! distributions, and distinct-configuration counts.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{is_identifier, Admg, Variable, VariableSchema};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("empty file")]
    Empty,
    #[error("no data rows")]
    NoRecords,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unmappable values in {} row(s): {}", .rows.len(), summarize_rows(.rows))]
    Unmappable { rows: Vec<usize>, first: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("recode line {line}: {msg}")]
    Recode { line: usize, msg: String },
    #[error("recode target `{0}` is not a schema variable")]
    UnknownTarget(String),
    #[error("recode for `{target}` produces code {code} outside its domain of size {size}")]
    CodeOutOfDomain { target: String, code: u8, size: usize },
    #[error("record {row}: code {code} outside the domain of `{var}`")]
    InvalidCode { row: usize, var: String, code: u8 },
    #[error("graph node `{0}` has no column in the dataset")]
    MissingVariable(String),
}

fn summarize_rows(rows: &[usize]) -> String {
    const SHOWN: usize = 20;
    let mut s: Vec<String> = rows.iter().take(SHOWN).map(usize::to_string).collect();
    if rows.len() > SHOWN {
        s.push(format!("... (+{})", rows.len() - SHOWN));
    }
    s.join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparison {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    Any,
    Label(String),
    Numeric(Comparison, f64),
}

impl Pattern {
    fn matches(&self, raw: &str) -> bool {
        match self {
            Pattern::Any => true,
            Pattern::Label(l) => l == raw,
            Pattern::Numeric(op, c) => match raw.parse::<f64>() {
                Ok(x) => match op {
                    Comparison::Le => x <= *c,
                    Comparison::Lt => x < *c,
                    Comparison::Ge => x >= *c,
                    Comparison::Gt => x > *c,
                    Comparison::Eq => x == *c,
                },
                Err(_) => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecodeRule {
    pub pattern: Pattern,
    pub code: u8,
}

/// Maps one source column onto one target variable; first matching rule wins.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRecode {
    pub target: String,
    pub column: String,
    pub rules: Vec<RecodeRule>,
}

impl ColumnRecode {
    pub fn apply(&self, raw: &str) -> Option<u8> {
        self.rules.iter().find(|r| r.pattern.matches(raw)).map(|r| r.code)
    }

    fn max_code(&self) -> u8 {
        self.rules.iter().map(|r| r.code).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecodeSpec {
    pub columns: Vec<ColumnRecode>,
}

impl RecodeSpec {
    /// Parses one rule set per line:
    ///
    /// ```text
    /// A <- race: African-American=1, *=0
    /// priors_count: <=2 -> 0, >2 -> 1
    /// ```
    ///
    /// Without `<target> <-` the target variable takes the column's name.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut columns: Vec<ColumnRecode> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| DataError::Recode { line: lineno + 1, msg };
            let (head, body) = line
                .split_once(':')
                .ok_or_else(|| err("expected `[target <-] column: rules`".into()))?;
            let (target, column) = match head.split_once("<-") {
                Some((t, c)) => (t.trim(), c.trim()),
                None => (head.trim(), head.trim()),
            };
            if !is_identifier(target) {
                return Err(err(format!("`{target}` is not a valid variable name")));
            }
            if column.is_empty() {
                return Err(err("missing column name".into()));
            }
            if columns.iter().any(|c| c.target == target) {
                return Err(err(format!("target `{target}` recoded twice")));
            }
            let mut rules = Vec::new();
            for rule in body.split(',').map(str::trim).filter(|r| !r.is_empty()) {
                let (pat, code) = match rule.split_once("->") {
                    Some(x) => x,
                    None => rule
                        .rsplit_once('=')
                        .ok_or_else(|| err(format!("rule `{rule}` needs `=` or `->`")))?,
                };
                let code: u8 = code
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("invalid code in `{rule}`")))?;
                rules.push(RecodeRule {
                    pattern: parse_pattern(pat.trim()).map_err(err)?,
                    code,
                });
            }
            if rules.is_empty() {
                return Err(err(format!("no rules for `{target}`")));
            }
            let col = ColumnRecode {
                target: target.into(),
                column: column.into(),
                rules,
            };
            let used: std::collections::BTreeSet<u8> = col.rules.iter().map(|r| r.code).collect();
            if used.len() != col.max_code() as usize + 1 {
                return Err(err(format!("codes for `{target}` must cover 0..={}", col.max_code())));
            }
            columns.push(col);
        }
        Ok(Self { columns })
    }

    pub fn for_target(&self, target: &str) -> Option<&ColumnRecode> {
        self.columns.iter().find(|c| c.target == target)
    }

    /// A schema whose variables are the recode targets, each with codes
    /// `0..=max` labelled by their decimal value.
    pub fn derived_schema(&self) -> Result<VariableSchema, crate::graph::GraphError> {
        VariableSchema::new(
            self.columns
                .iter()
                .map(|c| Variable {
                    name: c.target.clone(),
                    labels: (0..=c.max_code()).map(|k| k.to_string()).collect(),
                })
                .collect(),
        )
    }
}

fn parse_pattern(p: &str) -> Result<Pattern, String> {
    if p == "*" {
        return Ok(Pattern::Any);
    }
    let ops = [
        ("<=", Comparison::Le),
        (">=", Comparison::Ge),
        ("==", Comparison::Eq),
        ("<", Comparison::Lt),
        (">", Comparison::Gt),
    ];
    for (sym, op) in ops {
        if let Some(num) = p.strip_prefix(sym) {
            let c: f64 = num
                .trim()
                .parse()
                .map_err(|_| format!("invalid threshold in `{p}`"))?;
            return Ok(Pattern::Numeric(op, c));
        }
    }
    if p.is_empty() {
        return Err("empty pattern".into());
    }
    Ok(Pattern::Label(p.trim_matches('"').to_string()))
}

/// Fully observed categorical records over a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<VariableSchema>,
    cells: Vec<u8>,
}

impl Dataset {
    /// Builds a dataset from coded rows (each of schema length).
    pub fn from_rows(schema: Arc<VariableSchema>, rows: &[Vec<u8>]) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::NoRecords);
        }
        let n = schema.len();
        let mut cells = Vec::with_capacity(rows.len() * n);
        for (t, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "row {t} has the wrong width");
            for (v, &code) in row.iter().enumerate() {
                if code as usize >= schema.cardinality(v) {
                    return Err(DataError::InvalidCode {
                        row: t + 1,
                        var: schema.var(v).name.clone(),
                        code,
                    });
                }
            }
            cells.extend_from_slice(row);
        }
        Ok(Self { schema, cells })
    }

    pub fn schema(&self) -> &Arc<VariableSchema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.cells.len() / self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn row(&self, t: usize) -> &[u8] {
        let n = self.schema.len();
        &self.cells[t * n..(t + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks_exact(self.schema.len())
    }

    /// Records restricted to the graph's nodes, in node order.
    pub fn project(&self, g: &Admg) -> Result<Vec<Vec<u8>>, DataError> {
        let cols: Vec<usize> = g
            .names()
            .iter()
            .map(|n| {
                self.schema
                    .index_of(n)
                    .ok_or_else(|| DataError::MissingVariable(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(self
            .rows()
            .map(|r| cols.iter().map(|&c| r[c]).collect())
            .collect())
    }
}

/// Loads a CSV with a header row. Schema variables with a recode rule are
/// read from the rule's source column; the others from a column of the same
/// name, matched against category labels.
pub fn load_csv(text: &str, recode: &RecodeSpec, schema: Arc<VariableSchema>) -> Result<Dataset, DataError> {
    if text.trim().is_empty() {
        return Err(DataError::Empty);
    }
    for c in &recode.columns {
        let idx = schema
            .index_of(&c.target)
            .ok_or_else(|| DataError::UnknownTarget(c.target.clone()))?;
        let size = schema.cardinality(idx);
        if let Some(r) = c.rules.iter().find(|r| r.code as usize >= size) {
            return Err(DataError::CodeOutOfDomain {
                target: c.target.clone(),
                code: r.code,
                size,
            });
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let header_index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    enum Source<'a> {
        Recode(usize, &'a ColumnRecode),
        Direct(usize, &'a Variable),
    }
    let sources: Vec<Source> = schema
        .iter()
        .map(|v| match recode.for_target(&v.name) {
            Some(rc) => header_index
                .get(rc.column.as_str())
                .map(|&i| Source::Recode(i, rc))
                .ok_or_else(|| DataError::MissingColumn(rc.column.clone())),
            None => header_index
                .get(v.name.as_str())
                .map(|&i| Source::Direct(i, v))
                .ok_or_else(|| DataError::MissingColumn(v.name.clone())),
        })
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    let mut bad_rows = Vec::new();
    let mut first_bad = None;
    for (t, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        let row_no = t + 2; // 1-based, after the header
        let mut row_ok = true;
        for src in &sources {
            let (col, code) = match src {
                Source::Recode(i, rc) => (*i, rec.get(*i).and_then(|raw| rc.apply(raw))),
                Source::Direct(i, var) => (
                    *i,
                    rec.get(*i).and_then(|raw| {
                        var.labels
                            .iter()
                            .position(|l| l == raw)
                            .map(|p| p as u8)
                            .or_else(|| raw.parse::<u8>().ok().filter(|&c| (c as usize) < var.labels.len()))
                    }),
                ),
            };
            match code {
                Some(c) => cells.push(c),
                None => {
                    cells.push(0);
                    if row_ok {
                        row_ok = false;
                        bad_rows.push(row_no);
                        if first_bad.is_none() {
                            first_bad = Some(format!(
                                "row {row_no}, column `{}`: `{}`",
                                headers.get(col).unwrap_or("?"),
                                rec.get(col).unwrap_or("")
                            ));
                        }
                    }
                }
            }
        }
    }
    if !bad_rows.is_empty() {
        return Err(DataError::Unmappable {
            rows: bad_rows,
            first: first_bad.unwrap_or_default(),
        });
    }
    if cells.is_empty() {
        return Err(DataError::NoRecords);
    }
    Ok(Dataset { schema, cells })
}

/// Relative frequencies of full configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub frequencies: BTreeMap<Vec<u8>, f64>,
    pub count: usize,
}

impl EmpiricalDistribution {
    /// `P(target | given)` over schema variable indices; `None` when the
    /// conditioning event never occurs.
    pub fn conditional(&self, target: (usize, u8), given: &[(usize, u8)]) -> Option<f64> {
        let mut joint = 0.0;
        let mut marginal = 0.0;
        for (cfg, &p) in &self.frequencies {
            if given.iter().all(|&(v, c)| cfg[v] == c) {
                marginal += p;
                if cfg[target.0] == target.1 {
                    joint += p;
                }
            }
        }
        (marginal > 0.0).then(|| joint / marginal)
    }
}

/// Distinct configurations with their multiplicities, sorted by configuration.
pub fn distinct_configurations(d: &Dataset) -> Vec<(Vec<u8>, usize)> {
    let mut counts: BTreeMap<&[u8], usize> = BTreeMap::new();
    for row in d.rows() {
        *counts.entry(row).or_default() += 1;
    }
    counts.into_iter().map(|(k, v)| (k.to_vec(), v)).collect()
}

pub fn empirical_distribution(d: &Dataset) -> EmpiricalDistribution {
    let count = d.len();
    let frequencies = distinct_configurations(d)
        .into_iter()
        .map(|(cfg, m)| (cfg, m as f64 / count as f64))
        .collect();
    EmpiricalDistribution { frequencies, count }
}
