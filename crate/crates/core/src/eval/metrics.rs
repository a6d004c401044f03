//! AUROC, average precision and Harrell's C-statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject as seen by the metrics: a risk score, the by-target label
/// and the observed follow-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub score: f64,
    pub label: bool,
    pub survival_hours: f64,
    pub event: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub items: Vec<Scored>,
}

impl ScoredSet {
    pub fn new(items: Vec<Scored>) -> Result<Self> {
        if let Some(s) = items.iter().find(|s| !s.score.is_finite()) {
            return Err(Error::Range(format!("non-finite score {}", s.score)));
        }
        Ok(ScoredSet { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|s| s.label).count()
    }

    pub fn prevalence(&self) -> f64 {
        self.positives() as f64 / self.items.len() as f64
    }
}

/// Dense ranks (0-based) of `scores`, equal scores sharing a rank.
fn dense_ranks(scores: &[f64]) -> (Vec<usize>, usize) {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let ranks = scores
        .iter()
        .map(|s| sorted.partition_point(|v| v < s))
        .collect();
    (ranks, sorted.len())
}

/// Mann-Whitney AUROC. Ties count one half.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    let pos = set.positives() as u64;
    let neg = set.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData("AUROC needs both classes".into()));
    }
    let scores: Vec<f64> = set.items.iter().map(|s| s.score).collect();
    let (ranks, n_ranks) = dense_ranks(&scores);
    let mut pos_at = vec![0u64; n_ranks];
    let mut neg_at = vec![0u64; n_ranks];
    for (s, &r) in set.items.iter().zip(&ranks) {
        if s.label {
            pos_at[r] += 1;
        } else {
            neg_at[r] += 1;
        }
    }
    // Twice the Mann-Whitney statistic, kept integral.
    let mut doubled = 0u64;
    let mut neg_below = 0u64;
    for r in 0..n_ranks {
        doubled += pos_at[r] * (2 * neg_below + neg_at[r]);
        neg_below += neg_at[r];
    }
    Ok(doubled as f64 / (2 * pos * neg) as f64)
}

/// Average precision: mean over positives of the precision at each
/// positive's rank, scores descending, ties kept in input order.
pub fn aucpr(set: &ScoredSet) -> Result<f64> {
    let pos = set.positives();
    if pos == 0 {
        return Err(Error::InsufficientData("AUCPR needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.items[b].score.total_cmp(&set.items[a].score));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if set.items[i].label {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Harrell's C. A pair is comparable when one member has an event strictly
/// before the other's observed time; it is concordant when that member
/// carries the higher score. Score ties count one half.
pub fn concordance(set: &ScoredSet) -> Result<f64> {
    let scores: Vec<f64> = set.items.iter().map(|s| s.score).collect();
    let (ranks, n_ranks) = dense_ranks(&scores);
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.items[b].survival_hours.total_cmp(&set.items[a].survival_hours));
    let mut later = Fenwick::new(n_ranks);
    let (mut comparable, mut doubled) = (0u64, 0u64);
    let mut start = 0;
    while start < order.len() {
        let time = set.items[order[start]].survival_hours;
        let mut end = start;
        while end < order.len() && set.items[order[end]].survival_hours == time {
            end += 1;
        }
        let inserted = start as u64;
        for &i in &order[start..end] {
            if set.items[i].event {
                let r = ranks[i];
                let lower = later.below(r);
                let tied = later.below(r + 1) - lower;
                comparable += inserted;
                doubled += 2 * lower + tied;
            }
        }
        for &i in &order[start..end] {
            later.add(ranks[i]);
        }
        start = end;
    }
    if comparable == 0 {
        return Err(Error::InsufficientData("no comparable pairs".into()));
    }
    Ok(doubled as f64 / (2 * comparable) as f64)
}
