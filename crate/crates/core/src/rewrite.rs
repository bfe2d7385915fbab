//! Rewrite database bootstrap and greedy phrase matching.
//!
//! The bootstrap reads only pairs that differ in exactly one phrase on each
//! side, where the rewrite is unambiguous. Those counts then rank the
//! candidate phrase pairs of arbitrary diffs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::CreativePair;
use crate::features::{PositionedTerm, TermDiff};
use crate::statsdb::{odds, FeatureStat};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RewriteKey {
    pub src: String,
    pub dst: String,
}

impl RewriteKey {
    pub fn new(src: impl Into<String>, dst: impl Into<String>) -> Self {
        RewriteKey {
            src: src.into(),
            dst: dst.into(),
        }
    }

    pub fn reversed(&self) -> RewriteKey {
        RewriteKey {
            src: self.dst.clone(),
            dst: self.src.clone(),
        }
    }
}

/// Odds that rewriting `src` into `dst` raises serve weight.
pub trait RewriteOdds {
    fn rewrite_odds(&self, key: &RewriteKey) -> f64;

    /// Ranking strength used by [`greedy_match`].
    fn rewrite_strength(&self, key: &RewriteKey) -> f64 {
        match_strength(self.rewrite_odds(key))
    }
}

/// Explicit odds with a default for unseen keys.
#[derive(Debug, Clone, Default)]
pub struct FixedOdds {
    pub odds: HashMap<RewriteKey, f64>,
    pub default: f64,
}

impl FixedOdds {
    pub fn new(default: f64) -> Self {
        FixedOdds {
            odds: HashMap::new(),
            default,
        }
    }

    /// Sets the odds of `src -> dst`; the reverse key gets the reciprocal
    /// unless it was set explicitly.
    pub fn with(mut self, src: &str, dst: &str, odds: f64) -> Self {
        let key = RewriteKey::new(src, dst);
        self.odds.entry(key.reversed()).or_insert(1.0 / odds);
        self.odds.insert(key, odds);
        self
    }
}

impl RewriteOdds for FixedOdds {
    fn rewrite_odds(&self, key: &RewriteKey) -> f64 {
        self.odds.get(key).copied().unwrap_or(self.default)
    }
}

/// Bootstrap counts: `n_plus` counts pairs where the `dst` side had the
/// higher serve weight. Both orientations of every rewrite are stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewriteTable {
    pub counts: BTreeMap<RewriteKey, FeatureStat>,
}

impl RewriteTable {
    pub fn get(&self, key: &RewriteKey) -> FeatureStat {
        self.counts.get(key).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Records one observation of `src -> dst` and its mirror.
    pub fn observe(&mut self, key: RewriteKey, dst_better: bool) {
        let rev = key.reversed();
        self.counts.entry(key).or_default().observe(dst_better);
        self.counts.entry(rev).or_default().observe(!dst_better);
    }

    pub fn merge(&mut self, other: &RewriteTable) {
        for (k, s) in &other.counts {
            self.counts.entry(k.clone()).or_default().merge(s);
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> SmoothedRewrites<'_> {
        SmoothedRewrites { table: self, alpha }
    }
}

/// A rewrite table read through Laplace-smoothed odds.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedRewrites<'a> {
    table: &'a RewriteTable,
    alpha: f64,
}

impl RewriteOdds for SmoothedRewrites<'_> {
    fn rewrite_odds(&self, key: &RewriteKey) -> f64 {
        odds(self.table.get(key), self.alpha)
    }

    // max/min of the smoothed counts: bit-identical for a key and its mirror
    fn rewrite_strength(&self, key: &RewriteKey) -> f64 {
        let s = self.table.get(key);
        let a = s.n_plus as f64 + self.alpha;
        let b = s.n_minus as f64 + self.alpha;
        a.max(b) / a.min(b)
    }
}

/// Counts the serve-weight sign of every single-rewrite pair.
pub fn bootstrap_rewrites<'a>(
    items: impl IntoIterator<Item = (&'a CreativePair, &'a TermDiff)>,
) -> RewriteTable {
    let mut table = RewriteTable::default();
    for (pair, diff) in items {
        let Some((l, r)) = diff.single_rewrite() else {
            continue;
        };
        if pair.sw_left == pair.sw_right {
            continue;
        }
        // src is the left phrase, dst the right one
        table.observe(RewriteKey::new(l.text(), r.text()), pair.sw_right > pair.sw_left);
    }
    table
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewriteMatch {
    /// Matched (left phrase, right phrase) pairs in selection order.
    pub pairs: Vec<(PositionedTerm, PositionedTerm)>,
    pub leftover_left: Vec<PositionedTerm>,
    pub leftover_right: Vec<PositionedTerm>,
    /// Phrases dropped because they overlap a matched phrase on their side.
    pub covered_left: Vec<PositionedTerm>,
    pub covered_right: Vec<PositionedTerm>,
}

impl RewriteMatch {
    pub fn swapped(&self) -> RewriteMatch {
        RewriteMatch {
            pairs: self.pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
            leftover_left: self.leftover_right.clone(),
            leftover_right: self.leftover_left.clone(),
            covered_left: self.covered_right.clone(),
            covered_right: self.covered_left.clone(),
        }
    }
}

/// Evidence strength of a candidate: odds folded so that strong evidence in
/// either direction ranks high. Symmetric under swapping the two phrases.
pub fn match_strength(odds: f64) -> f64 {
    odds.max(1.0 / odds)
}

struct Candidate {
    strength: f64,
    left: usize,
    right: usize,
}

/// Orders candidates best first: strength descending, then the phrase texts
/// as an unordered pair, then coordinates.
fn candidate_order(a: &Candidate, b: &Candidate, l: &[PositionedTerm], r: &[PositionedTerm]) -> Ordering {
    b.strength
        .total_cmp(&a.strength)
        .then_with(|| tie_key(&l[a.left], &r[a.right]).cmp(&tie_key(&l[b.left], &r[b.right])))
}

fn tie_key<'a>(x: &'a PositionedTerm, y: &'a PositionedTerm) -> (&'a str, &'a str, (usize, usize), (usize, usize)) {
    let (lo, hi) = if x.text <= y.text { (x, y) } else { (y, x) };
    (&lo.text, &hi.text, (lo.line, lo.pos), (hi.line, hi.pos))
}

/// Greedily pairs left phrases with right phrases by descending rewrite
/// evidence until a side runs out or the best candidate falls below
/// `threshold`. Selecting a phrase retires every phrase on the same side
/// whose tokens overlap it.
pub fn greedy_match(diff: &TermDiff, db: &impl RewriteOdds, threshold: f64) -> RewriteMatch {
    let l = &diff.only_left;
    let r = &diff.only_right;
    let mut cands = Vec::with_capacity(l.len() * r.len());
    for (i, a) in l.iter().enumerate() {
        for (j, b) in r.iter().enumerate() {
            let key = RewriteKey::new(a.text.as_str(), b.text.as_str());
            cands.push(Candidate {
                strength: db.rewrite_strength(&key),
                left: i,
                right: j,
            });
        }
    }
    cands.sort_by(|a, b| candidate_order(a, b, l, r));

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Open,
        Matched,
        Covered,
    }
    let mut ls = vec![State::Open; l.len()];
    let mut rs = vec![State::Open; r.len()];
    let mut out = RewriteMatch::default();
    for c in &cands {
        if c.strength < threshold {
            break;
        }
        if ls[c.left] != State::Open || rs[c.right] != State::Open {
            continue;
        }
        ls[c.left] = State::Matched;
        rs[c.right] = State::Matched;
        for (k, t) in l.iter().enumerate() {
            if ls[k] == State::Open && t.overlaps(&l[c.left]) {
                ls[k] = State::Covered;
            }
        }
        for (k, t) in r.iter().enumerate() {
            if rs[k] == State::Open && t.overlaps(&r[c.right]) {
                rs[k] = State::Covered;
            }
        }
        out.pairs.push((l[c.left].clone(), r[c.right].clone()));
    }
    for (k, t) in l.iter().enumerate() {
        match ls[k] {
            State::Open => out.leftover_left.push(t.clone()),
            State::Covered => out.covered_left.push(t.clone()),
            State::Matched => {}
        }
    }
    for (k, t) in r.iter().enumerate() {
        match rs[k] {
            State::Open => out.leftover_right.push(t.clone()),
            State::Covered => out.covered_right.push(t.clone()),
            State::Matched => {}
        }
    }
    out
}
