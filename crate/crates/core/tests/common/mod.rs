//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use microbrowse::corpus::CreativePair;
use microbrowse::features::{PositionedTerm, TermDiff};
use microbrowse::rewrite::{RewriteKey, RewriteMatch, RewriteOdds};
use microbrowse::statsdb::{FeatureKey, FeatureStat};
use rand::Rng;

/// Greedy matching re-derived from its rule: repeatedly scan every live
/// (left, right) phrase pair, take the one with the largest folded odds
/// (ties by the unordered phrase texts, then coordinates), stop below the
/// threshold, and retire phrases overlapping a taken one.
pub fn brute_greedy(diff: &TermDiff, odds: &impl RewriteOdds, threshold: f64) -> RewriteMatch {
    let l = &diff.only_left;
    let r = &diff.only_right;
    let mut live_l = vec![true; l.len()];
    let mut live_r = vec![true; r.len()];
    let mut covered_l = Vec::new();
    let mut covered_r = Vec::new();
    let mut pairs = Vec::new();
    type TieKey = (String, String, (usize, usize), (usize, usize));
    loop {
        let mut best: Option<(f64, TieKey, usize, usize)> = None;
        for i in 0..l.len() {
            if !live_l[i] {
                continue;
            }
            for j in 0..r.len() {
                if !live_r[j] {
                    continue;
                }
                let o = odds.rewrite_odds(&RewriteKey::new(l[i].text.as_str(), r[j].text.as_str()));
                let s = if o >= 1.0 { o } else { 1.0 / o };
                let (a, b) = (&l[i], &r[j]);
                let key = if a.text <= b.text {
                    (a.text.clone(), b.text.clone(), (a.line, a.pos), (b.line, b.pos))
                } else {
                    (b.text.clone(), a.text.clone(), (b.line, b.pos), (a.line, a.pos))
                };
                let better = match &best {
                    None => true,
                    Some((bs, bk, _, _)) => s > *bs || (s == *bs && key < *bk),
                };
                if better {
                    best = Some((s, key, i, j));
                }
            }
        }
        let Some((s, _, i, j)) = best else { break };
        if s < threshold {
            break;
        }
        pairs.push((l[i].clone(), r[j].clone()));
        live_l[i] = false;
        live_r[j] = false;
        for k in 0..l.len() {
            if live_l[k] && overlaps(&l[k], &l[i]) {
                live_l[k] = false;
                covered_l.push(l[k].clone());
            }
        }
        for k in 0..r.len() {
            if live_r[k] && overlaps(&r[k], &r[j]) {
                live_r[k] = false;
                covered_r.push(r[k].clone());
            }
        }
    }
    let rest = |v: &[PositionedTerm], live: &[bool]| -> Vec<PositionedTerm> {
        v.iter().zip(live).filter(|(_, l)| **l).map(|(t, _)| t.clone()).collect()
    };
    RewriteMatch {
        pairs,
        leftover_left: rest(l, &live_l),
        leftover_right: rest(r, &live_r),
        covered_left: covered_l,
        covered_right: covered_r,
    }
}

fn overlaps(a: &PositionedTerm, b: &PositionedTerm) -> bool {
    a.line == b.line && a.pos < b.pos + b.n && b.pos < a.pos + a.n
}

/// Sorted copy for comparing phrase sets irrespective of order.
pub fn sorted(v: &[PositionedTerm]) -> Vec<PositionedTerm> {
    let mut v = v.to_vec();
    v.sort();
    v
}

/// A random diff of up to `max` phrases per side over a tiny vocabulary,
/// with overlapping n-grams, and random odds over its candidate keys.
pub fn random_diff(rng: &mut impl Rng, max: usize) -> TermDiff {
    const VOCAB: [&str; 5] = ["a", "b", "c", "d", "e"];
    let side = |rng: &mut dyn rand::RngCore| -> Vec<PositionedTerm> {
        let n = rng.random_range(0..=max);
        let mut out: Vec<PositionedTerm> = Vec::new();
        while out.len() < n {
            let len = rng.random_range(1..=3);
            let text: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
            let t = PositionedTerm::new(text.join(" "), rng.random_range(1..=2), rng.random_range(1..=4));
            if !out.iter().any(|o| o.line == t.line && o.pos == t.pos && o.n == t.n) {
                out.push(t);
            }
        }
        out.sort();
        out
    };
    let only_left = side(rng);
    // a phrase present on both sides is never part of a diff
    let only_right = side(rng)
        .into_iter()
        .filter(|t| !only_left.iter().any(|l| l.text == t.text))
        .collect();
    TermDiff {
        only_left,
        only_right,
        spans_left: vec![],
        spans_right: vec![],
    }
}

/// Feature counts recounted pair by pair straight from the accumulation
/// rule, with exact (unbucketed) positions.
pub fn naive_recount(items: &[(&CreativePair, &TermDiff, &RewriteMatch)]) -> BTreeMap<FeatureKey, FeatureStat> {
    let mut out: BTreeMap<FeatureKey, FeatureStat> = BTreeMap::new();
    let mut bump = |k: FeatureKey, plus: bool| {
        let s = out.entry(k).or_default();
        if plus {
            s.n_plus += 1;
        } else {
            s.n_minus += 1;
        }
    };
    for (pair, diff, m) in items {
        if pair.sw_left == pair.sw_right {
            continue;
        }
        let left_wins = pair.sw_left > pair.sw_right;
        for (terms, wins) in [(&diff.only_left, left_wins), (&diff.only_right, !left_wins)] {
            for t in terms {
                bump(FeatureKey::Term { text: t.text.clone() }, wins);
                bump(FeatureKey::TermPosition { line: t.line, pos: t.pos }, wins);
            }
        }
        for (a, b) in &m.pairs {
            // a is on the left, b on the right; key src -> dst is positive
            // when the dst side wins
            for (src, dst, dst_wins) in [(a, b, !left_wins), (b, a, left_wins)] {
                bump(
                    FeatureKey::Rewrite {
                        src: src.text.clone(),
                        dst: dst.text.clone(),
                    },
                    dst_wins,
                );
                bump(
                    FeatureKey::RewritePositionPair {
                        src_line: src.line,
                        src_pos: src.pos,
                        dst_line: dst.line,
                        dst_pos: dst.pos,
                    },
                    dst_wins,
                );
            }
        }
    }
    out
}

/// Ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}
