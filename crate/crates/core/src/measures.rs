//! Counterfactual fairness measures compiled into counterfactual-term
//! arithmetic.
//!
//! The mediator set `W` used by the nested counterfactuals of DE and IE is
//! derived from the graph: descendants of the protected attribute that are
//! also ancestors of the outcome.

use std::fmt;

use thiserror::Error;

use crate::graph::Admg;
use crate::scm::{ctf_probabilities, CounterfactualTerm, EdgeOverride, Event, Potential, ScmError, ScmState, Source};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("invalid measure: {0}")]
    Invalid(String),
    #[error("cannot parse measure `{input}`: {msg}")]
    Parse { input: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Measure {
    /// `P(y_{a1} | given) - P(y_{a0} | given)`; `given` normally fixes `A` and the other predictors.
    Ce { a0: u8, a1: u8, y: u8, given: Event },
    /// `P(y_{a1, W_{a0}} | a) - P(y_{a0} | a)`.
    De { a0: u8, a1: u8, y: u8, given_a: Option<u8> },
    /// `P(y_{a0, W_{a1}} | a) - P(y_{a0} | a)`.
    Ie { a0: u8, a1: u8, y: u8, given_a: Option<u8> },
    /// `P(y_{a0} | a1) - P(y_{a0} | a0)`.
    Se { a0: u8, a1: u8, y: u8 },
    /// `P(y | a1) - P(y | a0)`.
    Tv { a0: u8, a1: u8, y: u8 },
    /// Each child mechanism of `A` reads its own value of `A`; minus `P(y_{a0} | given)`.
    Pse { a0: u8, y: u8, inputs: Vec<(usize, u8)>, given: Event },
    /// An arbitrary conditional counterfactual probability.
    Raw { term: CounterfactualTerm, given: Event },
}

/// A measure bound to a protected attribute and an outcome node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasureQuery {
    pub attribute: usize,
    pub outcome: usize,
    pub measure: Measure,
}

impl MeasureQuery {
    pub fn kind(&self) -> &'static str {
        match self.measure {
            Measure::Ce { .. } => "CE",
            Measure::De { .. } => "DE",
            Measure::Ie { .. } => "IE",
            Measure::Se { .. } => "SE",
            Measure::Tv { .. } => "TV",
            Measure::Pse { .. } => "PSE",
            Measure::Raw { .. } => "RAW",
        }
    }

    pub fn validate(&self, g: &Admg) -> Result<(), MeasureError> {
        if let Measure::Raw { term, given } = &self.measure {
            term.validate(g)?;
            given.validate(g)?;
            return Ok(());
        }
        let n = g.node_count();
        if self.attribute >= n || self.outcome >= n {
            return Err(MeasureError::Invalid("attribute or outcome outside the graph".into()));
        }
        if self.attribute == self.outcome {
            return Err(MeasureError::Invalid("attribute and outcome must differ".into()));
        }
        let (da, dy) = (g.domain_size(self.attribute), g.domain_size(self.outcome));
        let check = |a0: u8, a1: Option<u8>, y: u8| -> Result<(), MeasureError> {
            if a0 as usize >= da || a1.is_some_and(|a| a as usize >= da) || y as usize >= dy {
                return Err(MeasureError::Invalid("code outside its variable's domain".into()));
            }
            if a1 == Some(a0) {
                return Err(MeasureError::Invalid("baseline and intervention must differ".into()));
            }
            Ok(())
        };
        match &self.measure {
            Measure::Ce { a0, a1, y, given } => {
                check(*a0, Some(*a1), *y)?;
                given.validate(g)?;
            }
            Measure::De { a0, a1, y, given_a } | Measure::Ie { a0, a1, y, given_a } => {
                check(*a0, Some(*a1), *y)?;
                if given_a.is_some_and(|a| a as usize >= da) {
                    return Err(MeasureError::Invalid("conditioning code outside the domain".into()));
                }
            }
            Measure::Se { a0, a1, y } | Measure::Tv { a0, a1, y } => check(*a0, Some(*a1), *y)?,
            Measure::Pse { a0, y, inputs, given } => {
                check(*a0, None, *y)?;
                given.validate(g)?;
                let mut children: Vec<usize> = g.children(self.attribute).to_vec();
                let mut mapped: Vec<usize> = inputs.iter().map(|&(c, _)| c).collect();
                children.sort_unstable();
                mapped.sort_unstable();
                if children != mapped {
                    return Err(MeasureError::Invalid(
                        "PSE input map must cover exactly the children of the attribute".into(),
                    ));
                }
                if inputs.iter().any(|&(_, a)| a as usize >= da) {
                    return Err(MeasureError::Invalid("PSE input code outside the domain".into()));
                }
            }
            Measure::Raw { .. } => {}
        }
        Ok(())
    }

    /// Renders the query in the command-line syntax.
    pub fn display<'a>(&'a self, g: &'a Admg) -> QueryDisplay<'a> {
        QueryDisplay { q: self, g }
    }
}

pub struct QueryDisplay<'a> {
    q: &'a MeasureQuery,
    g: &'a Admg,
}

impl fmt::Display for QueryDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.g;
        let lits = |e: &Event| -> String {
            e.literals()
                .iter()
                .map(|&(v, c)| {
                    if v == self.q.attribute {
                        format!("a={c}")
                    } else {
                        format!("{}={c}", g.name(v))
                    }
                })
                .collect::<Vec<_>>()
                .join(",")
        };
        match &self.q.measure {
            Measure::Ce { a0, a1, y, given } => write!(f, "CE(a0={a0},a1={a1},y={y}|{})", lits(given)),
            Measure::De { a0, a1, y, given_a } | Measure::Ie { a0, a1, y, given_a } => {
                write!(f, "{}(a0={a0},a1={a1},y={y}", self.q.kind())?;
                if let Some(a) = given_a {
                    write!(f, "|a={a}")?;
                }
                f.write_str(")")
            }
            Measure::Se { a0, a1, y } | Measure::Tv { a0, a1, y } => {
                write!(f, "{}(a0={a0},a1={a1},y={y})", self.q.kind())
            }
            Measure::Pse { a0, y, inputs, given } => {
                let map: Vec<String> = inputs.iter().map(|&(c, a)| format!("f_{}<-{a}", g.name(c))).collect();
                write!(f, "PSE(a0={a0},y={y}; {})", map.join(", "))?;
                if !given.literals().is_empty() {
                    write!(f, " | {}", lits(given))?;
                }
                Ok(())
            }
            Measure::Raw { term, given } => {
                write!(f, "P({}={}", PotentialDisplay(&term.outcome, g), term.value)?;
                if !given.literals().is_empty() {
                    let l: Vec<String> = given.literals().iter().map(|&(v, c)| format!("{}={c}", g.name(v))).collect();
                    write!(f, " | {}", l.join(","))?;
                }
                f.write_str(")")
            }
        }
    }
}

struct PotentialDisplay<'a>(&'a Potential, &'a Admg);

impl fmt::Display for PotentialDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, g) = (self.0, self.1);
        f.write_str(g.name(p.var))?;
        if p.subscript.is_empty() {
            return Ok(());
        }
        f.write_str("_{")?;
        for (i, (v, src)) in p.subscript.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match src {
                Source::Const(c) => write!(f, "{}={c}", g.name(*v))?,
                Source::Nested(inner) => write!(f, "{}={}", g.name(*v), PotentialDisplay(inner, g))?,
            }
        }
        f.write_str("}")
    }
}

/// Descendants of `a` that are also ancestors of `y`.
pub fn mediators(g: &Admg, a: usize, y: usize) -> Vec<usize> {
    let desc = g.descendants(a);
    let anc = g.ancestors(y);
    (0..g.node_count()).filter(|&v| desc[v] && anc[v]).collect()
}

/// Whether the measure is forced to zero by the graph alone.
pub fn structural_zero(g: &Admg, q: &MeasureQuery) -> bool {
    let (a, y) = (q.attribute, q.outcome);
    match q.measure {
        Measure::De { .. } => !g.has_edge(a, y),
        Measure::Ie { .. } => mediators(g, a, y).is_empty(),
        Measure::Ce { .. } => !g.descendants(a)[y],
        _ => false,
    }
}

fn intervened(var: usize, subscript: Vec<(usize, Source)>, value: u8) -> CounterfactualTerm {
    CounterfactualTerm::new(Potential::under(var, subscript), value)
}

/// `Y_{A=outer, W=W_{A=inner}} = y`.
fn nested_term(g: &Admg, a: usize, y: usize, outer: u8, inner: u8, value: u8) -> CounterfactualTerm {
    let mut sub = vec![(a, Source::Const(outer))];
    for w in mediators(g, a, y) {
        sub.push((w, Source::Nested(Potential::under(w, vec![(a, Source::Const(inner))]))));
    }
    intervened(y, sub, value)
}

fn given_attribute(a: usize, value: Option<u8>) -> Event {
    match value {
        Some(v) => Event::new(vec![(a, v)]).expect("single literal"),
        None => Event::always(),
    }
}

/// Signed value of a measure under one fully specified SCM.
pub fn eval_measure(scm: &ScmState, q: &MeasureQuery) -> Result<f64, MeasureError> {
    let g = scm.graph().clone();
    q.validate(&g)?;
    let (a, y) = (q.attribute, q.outcome);
    if structural_zero(&g, q) {
        let given = match &q.measure {
            Measure::Ce { given, .. } => given.clone(),
            Measure::De { given_a, .. } | Measure::Ie { given_a, .. } => given_attribute(a, *given_a),
            _ => Event::always(),
        };
        if !given.literals().is_empty() && event_mass(scm, &given) <= 0.0 {
            return Err(ScmError::ZeroMass.into());
        }
        return Ok(0.0);
    }
    let y_under = |av: u8, yv: u8| intervened(y, vec![(a, Source::Const(av))], yv);
    let diff = |terms: [CounterfactualTerm; 2], given: &Event| -> Result<f64, MeasureError> {
        let p = ctf_probabilities(scm, &terms, given)?;
        Ok(p[0] - p[1])
    };
    match &q.measure {
        Measure::Ce { a0, a1, y: yv, given } => diff([y_under(*a1, *yv), y_under(*a0, *yv)], given),
        Measure::De { a0, a1, y: yv, given_a } => diff(
            [nested_term(&g, a, y, *a1, *a0, *yv), y_under(*a0, *yv)],
            &given_attribute(a, *given_a),
        ),
        Measure::Ie { a0, a1, y: yv, given_a } => diff(
            [nested_term(&g, a, y, *a0, *a1, *yv), y_under(*a0, *yv)],
            &given_attribute(a, *given_a),
        ),
        Measure::Se { a0, a1, y: yv } => {
            let t = [y_under(*a0, *yv)];
            let p1 = ctf_probabilities(scm, &t, &given_attribute(a, Some(*a1)))?[0];
            let p0 = ctf_probabilities(scm, &t, &given_attribute(a, Some(*a0)))?[0];
            Ok(p1 - p0)
        }
        Measure::Tv { a0, a1, y: yv } => {
            let t = [intervened(y, Vec::new(), *yv)];
            let p1 = ctf_probabilities(scm, &t, &given_attribute(a, Some(*a1)))?[0];
            let p0 = ctf_probabilities(scm, &t, &given_attribute(a, Some(*a0)))?[0];
            Ok(p1 - p0)
        }
        Measure::Pse { .. } => eval_pse(scm, q),
        Measure::Raw { term, given } => Ok(ctf_probabilities(scm, std::slice::from_ref(term), given)?[0]),
    }
}

/// Probability of a factual event.
pub fn event_mass(scm: &ScmState, event: &Event) -> f64 {
    let grid = scm.grid();
    (0..grid.len())
        .filter(|&c| event.holds(grid.values(c)))
        .map(|c| grid.prob(c))
        .sum()
}

/// Path-specific effect by per-mechanism substitution of the attribute's value.
pub fn eval_pse(scm: &ScmState, q: &MeasureQuery) -> Result<f64, MeasureError> {
    let Measure::Pse { a0, y: yv, inputs, given } = &q.measure else {
        return Err(MeasureError::Invalid("not a PSE query".into()));
    };
    q.validate(scm.graph())?;
    let (a, y) = (q.attribute, q.outcome);
    let edges: Vec<EdgeOverride> = inputs
        .iter()
        .map(|&(child, value)| EdgeOverride { child, parent: a, value })
        .collect();
    let n = scm.layout().node_count();
    let none = vec![None; n];
    let mut baseline = vec![None; n];
    baseline[a] = Some(*a0);
    let (mut num_pse, mut num_base, mut den) = (0.0, 0.0, 0.0);
    let mut out = vec![0u8; n];
    scm.for_each_cell(|_, p, lat_off, observed| {
        if p == 0.0 || !given.holds(observed) {
            return;
        }
        den += p;
        scm.solve(lat_off, &none, &edges, &mut out);
        if out[y] == *yv {
            num_pse += p;
        }
        scm.solve(lat_off, &baseline, &[], &mut out);
        if out[y] == *yv {
            num_base += p;
        }
    });
    if den <= 0.0 {
        return Err(ScmError::ZeroMass.into());
    }
    Ok(num_pse / den - num_base / den)
}

/// `TV_{a0,a1}(y)` with its three components:
/// `SE_{a0,a1}(y)`, `IE_{a0,a1}(y|a1)` and `DE_{a1,a0}(y|a1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvDecomposition {
    pub tv: f64,
    pub se: f64,
    pub ie: f64,
    pub de: f64,
}

impl TvDecomposition {
    /// `SE + IE - DE`, which equals `tv` for every model.
    pub fn recombined(&self) -> f64 {
        self.se + self.ie - self.de
    }
}

/// The three component queries of the decomposition, in (SE, IE, DE) order.
pub fn tv_components(attribute: usize, outcome: usize, a0: u8, a1: u8, y: u8) -> [MeasureQuery; 3] {
    let q = |measure| MeasureQuery { attribute, outcome, measure };
    [
        q(Measure::Se { a0, a1, y }),
        q(Measure::Ie { a0, a1, y, given_a: Some(a1) }),
        q(Measure::De { a0: a1, a1: a0, y, given_a: Some(a1) }),
    ]
}

pub fn tv_decomposition(
    scm: &ScmState,
    attribute: usize,
    outcome: usize,
    a0: u8,
    a1: u8,
    y: u8,
) -> Result<TvDecomposition, MeasureError> {
    let tv = eval_measure(
        scm,
        &MeasureQuery {
            attribute,
            outcome,
            measure: Measure::Tv { a0, a1, y },
        },
    )?;
    let [se, ie, de] = tv_components(attribute, outcome, a0, a1, y);
    Ok(TvDecomposition {
        tv,
        se: eval_measure(scm, &se)?,
        ie: eval_measure(scm, &ie)?,
        de: eval_measure(scm, &de)?,
    })
}

/// Parses the command-line measure syntax, e.g. `DE(a0=0,a1=1,y=1|a=1)`,
/// `CE(a0=0,a1=1,y=1|a=0,W1=0,W2=1)`, `PSE(y=1; f_Y<-0, f_W2<-1)` or
/// `P(Y_{A=1,W=W_{A=0}}=1 | A=1)`.
pub fn parse_measure(input: &str, g: &Admg, attribute: &str, outcome: &str) -> Result<MeasureQuery, MeasureError> {
    let err = |msg: String| MeasureError::Parse {
        input: input.to_string(),
        msg,
    };
    let s = input.trim();
    let open = s.find('(').ok_or_else(|| err("expected `KIND(...)`".into()))?;
    if !s.ends_with(')') {
        return Err(err("missing closing parenthesis".into()));
    }
    let kind = s[..open].trim().to_ascii_uppercase();
    let body = &s[open + 1..s.len() - 1];
    if kind == "P" || kind == "RAW" {
        // Raw terms name their variables explicitly.
        let q = MeasureQuery {
            attribute: g.node(attribute).unwrap_or(0),
            outcome: g.node(outcome).unwrap_or(0),
            measure: parse_raw(body, g).map_err(err)?,
        };
        q.validate(g)?;
        return Ok(q);
    }
    let a = g
        .node(attribute)
        .ok_or_else(|| err(format!("protected attribute `{attribute}` is not in the graph")))?;
    let y = g
        .node(outcome)
        .ok_or_else(|| err(format!("outcome `{outcome}` is not in the graph")))?;

    let (head, rest) = match body.split_once(';') {
        Some((h, r)) => (h, Some(r)),
        None => (body, None),
    };
    let (params, cond) = match head.split_once('|') {
        Some((p, c)) => (p, Some(c)),
        None => (head, None),
    };
    let mut a0 = None;
    let mut a1 = None;
    let mut yv = None;
    for kv in params.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{kv}`")))?;
        let slot = match k.trim() {
            "a0" => (&mut a0, a),
            "a1" => (&mut a1, a),
            "y" => (&mut yv, y),
            other => return Err(err(format!("unknown parameter `{other}`"))),
        };
        *slot.0 = Some(parse_code(g, slot.1, v.trim()).map_err(err)?);
    }
    let given_lits = match cond {
        Some(c) => parse_literals(c, g, Some(a)).map_err(err)?,
        None => Vec::new(),
    };
    let need = |x: Option<u8>, name: &str| x.ok_or_else(|| err(format!("missing `{name}`")));
    let only_a = |lits: &[(usize, u8)]| -> Result<Option<u8>, MeasureError> {
        match lits {
            [] => Ok(None),
            [(v, c)] if *v == a => Ok(Some(*c)),
            _ => Err(err("only `a=<value>` may be conditioned on here".into())),
        }
    };
    if kind != "PSE" && rest.is_some() {
        return Err(err("`;` is only valid in PSE".into()));
    }
    let measure = match kind.as_str() {
        "CE" => Measure::Ce {
            a0: need(a0, "a0")?,
            a1: need(a1, "a1")?,
            y: need(yv, "y")?,
            given: Event::new(given_lits).map_err(MeasureError::from)?,
        },
        "DE" => Measure::De {
            a0: need(a0, "a0")?,
            a1: need(a1, "a1")?,
            y: need(yv, "y")?,
            given_a: only_a(&given_lits)?,
        },
        "IE" => Measure::Ie {
            a0: need(a0, "a0")?,
            a1: need(a1, "a1")?,
            y: need(yv, "y")?,
            given_a: only_a(&given_lits)?,
        },
        "SE" | "TV" => {
            if !given_lits.is_empty() {
                return Err(err(format!("{kind} takes no conditioning event")));
            }
            let (a0, a1, y) = (need(a0, "a0")?, need(a1, "a1")?, need(yv, "y")?);
            if kind == "SE" {
                Measure::Se { a0, a1, y }
            } else {
                Measure::Tv { a0, a1, y }
            }
        }
        "PSE" => {
            if a1.is_some() {
                return Err(err("PSE takes its intervention values from the input map".into()));
            }
            // A conditioning event, if any, follows the input map: `PSE(y=1; f_Y<-1 | a=0)`.
            let rest = rest.ok_or_else(|| err("PSE needs `; f_<child><-<value>, ...`".into()))?;
            let (map, cond) = match rest.split_once('|') {
                Some((m, c)) => (m, Some(c)),
                None => (rest, None),
            };
            let mut inputs = Vec::new();
            for item in map.split(',').map(str::trim).filter(|x| !x.is_empty()) {
                let (lhs, rhs) = item
                    .split_once("<-")
                    .ok_or_else(|| err(format!("expected `f_<child><-<value>`, got `{item}`")))?;
                let child_name = lhs
                    .trim()
                    .strip_prefix("f_")
                    .ok_or_else(|| err(format!("expected `f_<child>`, got `{}`", lhs.trim())))?;
                let child = g
                    .node(child_name)
                    .ok_or_else(|| err(format!("unknown node `{child_name}`")))?;
                inputs.push((child, parse_code(g, a, rhs.trim()).map_err(err)?));
            }
            let mut lits = given_lits;
            if let Some(c) = cond {
                lits.extend(parse_literals(c, g, Some(a)).map_err(err)?);
            }
            Measure::Pse {
                a0: a0.unwrap_or(0),
                y: need(yv, "y")?,
                inputs,
                given: Event::new(lits).map_err(MeasureError::from)?,
            }
        }
        other => return Err(err(format!("unknown measure kind `{other}`"))),
    };
    let q = MeasureQuery {
        attribute: a,
        outcome: y,
        measure,
    };
    q.validate(g)?;
    Ok(q)
}

fn parse_code(g: &Admg, node: usize, token: &str) -> Result<u8, String> {
    let labels = &g.schema().var(g.schema_var(node)).labels;
    if let Some(p) = labels.iter().position(|l| l == token) {
        return Ok(p as u8);
    }
    match token.parse::<u8>() {
        Ok(c) if (c as usize) < labels.len() => Ok(c),
        _ => Err(format!("`{token}` is not a value of `{}`", g.name(node))),
    }
}

fn parse_literals(s: &str, g: &Admg, attribute: Option<usize>) -> Result<Vec<(usize, u8)>, String> {
    let mut out = Vec::new();
    for kv in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected name=value, got `{kv}`"))?;
        let k = k.trim();
        let node = match (k, attribute) {
            ("a", Some(a)) => a,
            _ => g.node(k).ok_or_else(|| format!("unknown node `{k}`"))?,
        };
        out.push((node, parse_code(g, node, v.trim())?));
    }
    Ok(out)
}

fn parse_raw(body: &str, g: &Admg) -> Result<Measure, String> {
    let (lhs, cond) = match split_top_level(body, '|') {
        Some((l, c)) => (l, Some(c)),
        None => (body, None),
    };
    let lhs = lhs.trim();
    let eq = lhs.rfind('=').ok_or("expected `<term>=<value>`")?;
    let (pot_s, val_s) = (&lhs[..eq], &lhs[eq + 1..]);
    let mut p = PotentialParser { s: pot_s.as_bytes(), pos: 0, g };
    let pot = p.potential()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(format!("unexpected trailing input in `{pot_s}`"));
    }
    let value = parse_code(g, pot.var, val_s.trim())?;
    let given = match cond {
        Some(c) => parse_literals(c, g, None)?,
        None => Vec::new(),
    };
    Ok(Measure::Raw {
        term: CounterfactualTerm::new(pot, value),
        given: Event::new(given).map_err(|e| e.to_string())?,
    })
}

fn split_top_level(s: &str, sep: char) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            c if c == sep && depth == 0 => return Some((&s[..i], &s[i + 1..])),
            _ => {}
        }
    }
    None
}

struct PotentialParser<'a> {
    s: &'a [u8],
    pos: usize,
    g: &'a Admg,
}

impl PotentialParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn ident(&mut self) -> Result<String, String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            // `_` followed by `{` starts a subscript.
            if c == b'_' && self.s.get(self.pos + 1) == Some(&b'{') {
                break;
            }
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err("expected a variable name".into());
        }
        Ok(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }

    fn node(&mut self) -> Result<usize, String> {
        let name = self.ident()?;
        self.g.node(&name).ok_or_else(|| format!("unknown node `{name}`"))
    }

    fn potential(&mut self) -> Result<Potential, String> {
        let var = self.node()?;
        let mut subscript = Vec::new();
        if self.s[self.pos..].starts_with(b"_{") {
            self.pos += 2;
            loop {
                let v = self.node()?;
                self.skip_ws();
                if self.s.get(self.pos) != Some(&b'=') {
                    return Err("expected `=` in subscript".into());
                }
                self.pos += 1;
                self.skip_ws();
                let src = if self.s.get(self.pos).is_some_and(|c| c.is_ascii_alphabetic()) {
                    let save = self.pos;
                    let ident = self.ident()?;
                    let is_label = self.g.schema().var(self.g.schema_var(v)).labels.contains(&ident)
                        && !self.s[self.pos..].starts_with(b"_{");
                    if is_label {
                        Source::Const(parse_code(self.g, v, &ident)?)
                    } else {
                        self.pos = save;
                        Source::Nested(self.potential()?)
                    }
                } else {
                    let start = self.pos;
                    while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    let tok = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                    Source::Const(parse_code(self.g, v, tok)?)
                };
                subscript.push((v, src));
                self.skip_ws();
                match self.s.get(self.pos) {
                    Some(b',') => self.pos += 1,
                    Some(b'}') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err("expected `,` or `}` in subscript".into()),
                }
            }
        }
        Ok(Potential { var, subscript })
    }
}
