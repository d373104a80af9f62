//! Pooling chain samples into a mean, a (1 - delta) interval and worst-case bounds.

use thiserror::Error;

use crate::sampler::ChainOutput;

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("no samples to aggregate")]
    Empty,
    #[error("delta must lie in [0, 1), got {0}")]
    Delta(f64),
    #[error("sample counts differ between components ({0} vs {1})")]
    Mismatch(usize, usize),
    #[error("query index {0} is missing from a chain")]
    MissingQuery(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub query: String,
    pub graphs: Vec<String>,
    /// Retained samples contributed by each chain.
    pub per_chain: Vec<usize>,
    /// Pooled samples in nondecreasing order.
    pub sorted: Vec<f64>,
    pub mean: f64,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub worst_low: f64,
    pub worst_high: f64,
    pub skipped: usize,
    pub trace_gap: Option<f64>,
}

impl BoundReport {
    pub fn n_samples(&self) -> usize {
        self.sorted.len()
    }

    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, usize)> {
        histogram(&self.sorted, bins)
    }
}

fn floor_tol(x: f64) -> f64 {
    (x + 1e-9 * x.abs().max(1.0)).floor()
}

fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

/// 1-based order-statistic positions of the interval endpoints for `n` samples.
pub fn interval_positions(n: usize, delta: f64) -> (usize, usize) {
    let nf = n as f64;
    let lo = (floor_tol(delta / 2.0 * nf) as usize).max(1);
    let hi = (ceil_tol((1.0 - delta / 2.0) * nf) as usize).clamp(1, n.max(1));
    (lo.min(hi), hi)
}

/// Mean computed relative to the first value, so constant inputs are reproduced exactly.
pub fn shifted_mean(xs: &[f64]) -> f64 {
    let base = xs[0];
    base + xs.iter().map(|x| x - base).sum::<f64>() / xs.len() as f64
}

/// Pools per-chain sample sequences; `None` entries are skipped and counted.
pub fn aggregate_samples(chains: &[&[Option<f64>]], delta: f64) -> Result<BoundReport, BoundError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(BoundError::Delta(delta));
    }
    let mut sorted = Vec::new();
    let mut per_chain = Vec::with_capacity(chains.len());
    let mut skipped = 0;
    for c in chains {
        let before = sorted.len();
        for s in c.iter() {
            match s {
                Some(v) => sorted.push(*v),
                None => skipped += 1,
            }
        }
        per_chain.push(sorted.len() - before);
    }
    if sorted.is_empty() {
        return Err(BoundError::Empty);
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = shifted_mean(&sorted);
    let (lo, hi) = interval_positions(n, delta);
    Ok(BoundReport {
        query: String::new(),
        graphs: Vec::new(),
        per_chain,
        mean,
        delta,
        ci_low: sorted[lo - 1],
        ci_high: sorted[hi - 1],
        worst_low: sorted[0],
        worst_high: sorted[n - 1],
        sorted,
        skipped,
        trace_gap: None,
    })
}

/// Aggregates query `query` across chains.
pub fn aggregate(chains: &[ChainOutput], query: usize, delta: f64) -> Result<BoundReport, BoundError> {
    let sets = chains
        .iter()
        .map(|c| c.samples.get(query).map(Vec::as_slice).ok_or(BoundError::MissingQuery(query)))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_samples(&sets, delta)
}

/// Per-sample `SE + IE - DE`; a sample is skipped if any component is.
pub fn combine_tv(se: &[Option<f64>], ie: &[Option<f64>], de: &[Option<f64>]) -> Result<Vec<Option<f64>>, BoundError> {
    if se.len() != ie.len() {
        return Err(BoundError::Mismatch(se.len(), ie.len()));
    }
    if se.len() != de.len() {
        return Err(BoundError::Mismatch(se.len(), de.len()));
    }
    Ok(se
        .iter()
        .zip(ie)
        .zip(de)
        .map(|((s, i), d)| Some((*s)? + (*i)? - (*d)?))
        .collect())
}

/// TV bound from per-sample combinations of the SE, IE and DE queries at the
/// given indices of every chain.
pub fn tv_bound(chains: &[ChainOutput], se: usize, ie: usize, de: usize, delta: f64) -> Result<BoundReport, BoundError> {
    let combined = chains
        .iter()
        .map(|c| {
            let get = |q: usize| c.samples.get(q).ok_or(BoundError::MissingQuery(q));
            combine_tv(get(se)?, get(ie)?, get(de)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sets: Vec<&[Option<f64>]> = combined.iter().map(Vec::as_slice).collect();
    aggregate_samples(&sets, delta)
}

/// Equal-width histogram over the range of `sorted`; the last bin is closed.
pub fn histogram(sorted: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return Vec::new();
    };
    if hi <= lo || bins <= 1 {
        return vec![(lo, hi, sorted.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &x in sorted {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let left = lo + i as f64 * width;
            let right = if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width };
            (left, right, c)
        })
        .collect()
}
