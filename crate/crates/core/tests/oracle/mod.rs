//! Brute-force evaluation of measures straight from their definitions.
//!
//! Reads only the graph, `q` and the raw function tables. Units are
//! enumerated one by one and every variable is evaluated by recursion over
//! its parents, so none of the engine's solver, grid cache or term code is
//! involved.

#![allow(dead_code)]

use std::sync::Arc;

use cfbound::graph::{parse_graph, Admg, VariableSchema};
use cfbound::measures::{Measure, MeasureQuery};
use cfbound::scm::{Event, Potential, ScmLayout, ScmState, Source};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::beta::ln_beta;

pub struct Oracle<'a> {
    g: &'a Admg,
    q: &'a [Vec<f64>],
    tables: &'a [Vec<u8>],
}

type Fixed<'f> = &'f dyn Fn(usize) -> Option<u8>;
type Inputs<'f> = &'f dyn Fn(usize, usize) -> Option<u8>;

impl<'a> Oracle<'a> {
    pub fn new(scm: &'a ScmState) -> Self {
        Self {
            g: scm.graph(),
            q: scm.q(),
            tables: scm.tables(),
        }
    }

    /// Table lookup. Latent parents fill the low mixed-radix digits and
    /// observed parents the high ones, each in declaration order.
    fn f(&self, v: usize, parent_values: &[u8], u: &[usize]) -> u8 {
        let mut idx = 0;
        let mut stride = 1;
        for &l in self.g.latent_parents(v) {
            idx += u[l] * stride;
            stride *= self.q[l].len();
        }
        for (i, &p) in self.g.parents(v).iter().enumerate() {
            idx += parent_values[i] as usize * stride;
            stride *= self.g.domain_size(p);
        }
        self.tables[v][idx]
    }

    fn value(&self, v: usize, u: &[usize], fixed: Fixed, inputs: Inputs) -> u8 {
        if let Some(c) = fixed(v) {
            return c;
        }
        let pv: Vec<u8> = self
            .g
            .parents(v)
            .iter()
            .map(|&p| inputs(v, p).unwrap_or_else(|| self.value(p, u, fixed, inputs)))
            .collect();
        self.f(v, &pv, u)
    }

    pub fn factual(&self, v: usize, u: &[usize]) -> u8 {
        self.value(v, u, &|_| None, &|_, _| None)
    }

    fn under(&self, v: usize, u: &[usize], assignment: &[(usize, u8)]) -> u8 {
        let fixed = |x: usize| assignment.iter().find(|(w, _)| *w == x).map(|&(_, c)| c);
        self.value(v, u, &fixed, &|_, _| None)
    }

    fn potential(&self, p: &Potential, u: &[usize]) -> u8 {
        let assignment: Vec<(usize, u8)> = p
            .subscript
            .iter()
            .map(|(w, src)| {
                (
                    *w,
                    match src {
                        Source::Const(c) => *c,
                        Source::Nested(inner) => self.potential(inner, u),
                    },
                )
            })
            .collect();
        self.under(p.var, u, &assignment)
    }

    /// Every latent configuration with its probability.
    pub fn units(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for q in self.q {
            let mut next = Vec::new();
            for (u, p) in &out {
                for (k, &qk) in q.iter().enumerate() {
                    let mut u2 = u.clone();
                    u2.push(k);
                    next.push((u2, p * qk));
                }
            }
            out = next;
        }
        out
    }

    /// `E[num | cond]`, or `None` when `cond` has no mass.
    fn conditional(&self, num: impl Fn(&[usize]) -> f64, cond: impl Fn(&[usize]) -> bool) -> Option<f64> {
        let (mut n, mut d) = (0.0, 0.0);
        for (u, p) in self.units() {
            if cond(&u) {
                d += p;
                n += p * num(&u);
            }
        }
        (d > 0.0).then(|| n / d)
    }

    fn holds(&self, e: &Event, u: &[usize]) -> bool {
        e.literals().iter().all(|&(v, c)| self.factual(v, u) == c)
    }

    /// Nodes on a directed path strictly between `a` and `y`.
    pub fn mediators(&self, a: usize, y: usize) -> Vec<usize> {
        let n = self.g.node_count();
        let reaches = |from: usize, to: usize| -> bool {
            let mut stack = vec![from];
            let mut seen = vec![false; n];
            while let Some(x) = stack.pop() {
                for (c, s) in seen.iter_mut().enumerate() {
                    if self.g.parents(c).contains(&x) && !*s {
                        if c == to {
                            return true;
                        }
                        *s = true;
                        stack.push(c);
                    }
                }
            }
            false
        };
        (0..n).filter(|&w| w != a && w != y && reaches(a, w) && reaches(w, y)).collect()
    }

    pub fn measure(&self, query: &MeasureQuery) -> Option<f64> {
        let (a, y) = (query.attribute, query.outcome);
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        let given_a = |ga: Option<u8>| move |u: &[usize]| ga.is_none_or(|c| self.factual(a, u) == c);
        match &query.measure {
            Measure::Ce { a0, a1, y: yv, given } => self.conditional(
                |u| ind(self.under(y, u, &[(a, *a1)]) == *yv) - ind(self.under(y, u, &[(a, *a0)]) == *yv),
                |u| self.holds(given, u),
            ),
            Measure::De { a0, a1, y: yv, given_a: ga } => {
                let w = self.mediators(a, y);
                self.conditional(
                    |u| {
                        let mut assign: Vec<(usize, u8)> = w.iter().map(|&m| (m, self.under(m, u, &[(a, *a0)]))).collect();
                        assign.push((a, *a1));
                        ind(self.under(y, u, &assign) == *yv) - ind(self.under(y, u, &[(a, *a0)]) == *yv)
                    },
                    given_a(*ga),
                )
            }
            Measure::Ie { a0, a1, y: yv, given_a: ga } => {
                let w = self.mediators(a, y);
                self.conditional(
                    |u| {
                        let mut assign: Vec<(usize, u8)> = w.iter().map(|&m| (m, self.under(m, u, &[(a, *a1)]))).collect();
                        assign.push((a, *a0));
                        ind(self.under(y, u, &assign) == *yv) - ind(self.under(y, u, &[(a, *a0)]) == *yv)
                    },
                    given_a(*ga),
                )
            }
            Measure::Se { a0, a1, y: yv } => {
                let p = |cond: u8| {
                    self.conditional(|u| ind(self.under(y, u, &[(a, *a0)]) == *yv), given_a(Some(cond)))
                };
                Some(p(*a1)? - p(*a0)?)
            }
            Measure::Tv { a0, a1, y: yv } => {
                let p = |cond: u8| self.conditional(|u| ind(self.factual(y, u) == *yv), given_a(Some(cond)));
                Some(p(*a1)? - p(*a0)?)
            }
            Measure::Pse { a0, y: yv, inputs, given } => self.conditional(
                |u| {
                    let substituted = |child: usize, parent: usize| {
                        if parent != a {
                            return None;
                        }
                        inputs.iter().find(|(c, _)| *c == child).map(|&(_, v)| v)
                    };
                    let pse = self.value(y, u, &|_| None, &substituted);
                    ind(pse == *yv) - ind(self.under(y, u, &[(a, *a0)]) == *yv)
                },
                |u| self.holds(given, u),
            ),
            Measure::Raw { term, given } => self.conditional(
                |u| ind(self.potential(&term.outcome, u) == term.value),
                |u| self.holds(given, u),
            ),
        }
    }
}

/// Random graph over a subset of `Z A W1 W2 Y` (always `A` and `Y`) with
/// random latents, latent cardinalities in `1..=max_k`, random `q` and tables.
pub fn random_scm<R: Rng>(rng: &mut R, max_k: usize) -> ScmState {
    let pool = ["Z", "A", "W1", "W2", "Y"];
    let names: Vec<&str> = loop {
        let chosen: Vec<&str> = pool
            .iter()
            .copied()
            .filter(|n| *n == "A" || *n == "Y" || rng.gen_bool(0.5))
            .collect();
        if chosen.len() <= 4 {
            break chosen;
        }
    };
    let mut text = String::new();
    for n in &names {
        text.push_str(&format!("node {n}\n"));
    }
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            if rng.gen_bool(0.5) {
                text.push_str(&format!("edge {} -> {}\n", names[i], names[j]));
            }
        }
    }
    for l in 0..rng.gen_range(0..=2) {
        let mut kids: Vec<&str> = names.clone();
        kids.shuffle(rng);
        kids.truncate(rng.gen_range(1..=names.len()));
        text.push_str(&format!("latent L{l} -> {}\n", kids.join(" ")));
    }
    let schema = Arc::new(VariableSchema::binary(names.iter().copied()).unwrap());
    let g = Arc::new(parse_graph(&text, schema).unwrap());
    let cards: Vec<usize> = (0..g.latents().len()).map(|_| rng.gen_range(1..=max_k)).collect();
    let layout = ScmLayout::new(g, cards, 1 << 20).unwrap();
    let q = layout
        .cardinalities()
        .iter()
        .map(|&k| {
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let tables = layout.random_tables(rng);
    ScmState::new(layout, q, tables).unwrap()
}

/// One query of every kind for `A` and `Y`, with random values and conditioning.
pub fn random_queries<R: Rng>(rng: &mut R, g: &Admg) -> Vec<MeasureQuery> {
    let a = g.node("A").unwrap();
    let y = g.node("Y").unwrap();
    let a0: u8 = rng.gen_range(0..2);
    let a1 = 1 - a0;
    let yv: u8 = rng.gen_range(0..2);
    let mut given = vec![(a, rng.gen_range(0..2u8))];
    for v in 0..g.node_count() {
        if v != a && v != y && rng.gen_bool(0.5) {
            given.push((v, rng.gen_range(0..2)));
        }
    }
    let pse_given = if rng.gen_bool(0.5) { vec![(a, rng.gen_range(0..2u8))] } else { Vec::new() };
    let ga = |rng: &mut R| rng.gen_bool(0.5).then(|| rng.gen_range(0..2u8));
    let q = |measure| MeasureQuery { attribute: a, outcome: y, measure };
    vec![
        q(Measure::Ce { a0, a1, y: yv, given: Event::new(given).unwrap() }),
        q(Measure::De { a0, a1, y: yv, given_a: ga(rng) }),
        q(Measure::Ie { a0, a1, y: yv, given_a: ga(rng) }),
        q(Measure::Se { a0, a1, y: yv }),
        q(Measure::Tv { a0, a1, y: yv }),
        q(Measure::Pse {
            a0,
            y: yv,
            inputs: g.children(a).iter().map(|&c| (c, rng.gen_range(0..2u8))).collect(),
            given: Event::new(pse_given).unwrap(),
        }),
    ]
}

/// Exact posterior of `P(V = 1)` for one binary node with a `k`-valued
/// latent, uniform table prior and `Dirichlet(alpha)` on `q`. Only tables
/// with `m` ones, `0 < m < k`, explain data containing both values; given
/// `m`, `P(V = 1)` aggregates to `Beta(m alpha + ones, (k - m) alpha + zeros)`.
pub struct BetaMixture {
    pub parts: Vec<(f64, Beta)>,
}

pub fn beta_mixture(k: usize, alpha: f64, ones: f64, zeros: f64) -> BetaMixture {
    let ln_choose = |n: usize, r: usize| -> f64 { (1..=r).map(|i| ((n - r + i) as f64).ln() - (i as f64).ln()).sum() };
    let raw: Vec<(f64, f64, f64)> = (1..k)
        .map(|m| {
            let (a, b) = (m as f64 * alpha, (k - m) as f64 * alpha);
            (ln_choose(k, m) + ln_beta(a + ones, b + zeros) - ln_beta(a, b), a + ones, b + zeros)
        })
        .collect();
    let top = raw.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = raw.iter().map(|p| (p.0 - top).exp()).sum();
    BetaMixture {
        parts: raw
            .into_iter()
            .map(|(lw, a, b)| ((lw - top).exp() / z, Beta::new(a, b).unwrap()))
            .collect(),
    }
}

impl BetaMixture {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.parts.iter().map(|(w, b)| w * b.cdf(x)).sum()
    }

    /// Kolmogorov distance between the empirical distribution of `draws` and this mixture.
    pub fn kolmogorov_distance(&self, draws: &[f64]) -> f64 {
        let mut xs = draws.to_vec();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = self.cdf(x);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max)
    }
}
