//! Corpus to features: pairs, diffs, rewrite bootstrap, matching and the
//! statistics database, shared by the CLI and the evaluation harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_pairs, pairs_fingerprint, AdGroup, CreativePair, Label};
use crate::error::Result;
use crate::features::{diff_phrases, TermDiff};
use crate::model::{featurize, FeatureVector, Variant};
use crate::rewrite::{bootstrap_rewrites, greedy_match, RewriteMatch, RewriteOdds};
use crate::statsdb::{accumulate_sharded, KeyScheme, PairEvidence, StatsDb};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Laplace smoothing for serve weights and feature odds.
    pub alpha: f64,
    pub min_gap: f64,
    pub seed: u64,
    pub match_threshold: f64,
    pub position_bucket: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 1.0,
            min_gap: 0.05,
            seed: 42,
            match_threshold: 1.0,
            position_bucket: 1,
        }
    }
}

impl PipelineConfig {
    pub fn scheme(&self) -> KeyScheme {
        KeyScheme {
            position_bucket: self.position_bucket.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPair {
    pub pair: CreativePair,
    pub diff: TermDiff,
}

pub fn prepare_pairs(groups: &[AdGroup], cfg: &PipelineConfig) -> Result<Vec<PreparedPair>> {
    let pairs = build_pairs(groups, cfg.alpha, cfg.min_gap, cfg.seed)?;
    Ok(pairs
        .into_par_iter()
        .map(|pair| {
            let diff = diff_phrases(&pair.left, &pair.right);
            PreparedPair { pair, diff }
        })
        .collect())
}

pub fn match_pairs(pairs: &[PreparedPair], odds: &(impl RewriteOdds + Sync), threshold: f64) -> Vec<RewriteMatch> {
    pairs
        .par_iter()
        .map(|p| greedy_match(&p.diff, odds, threshold))
        .collect()
}

/// Bootstraps rewrites from `train`, matches it, and accumulates the
/// statistics database. The database fingerprint is that of `train`.
pub fn build_stats(train: &[PreparedPair], cfg: &PipelineConfig) -> Result<(StatsDb, Vec<RewriteMatch>)> {
    let rewrites = bootstrap_rewrites(train.iter().map(|p| (&p.pair, &p.diff)));
    let matches = match_pairs(train, &rewrites.with_alpha(cfg.alpha), cfg.match_threshold);
    let evidence: Vec<PairEvidence<'_>> = train
        .iter()
        .zip(&matches)
        .map(|(p, m)| PairEvidence {
            pair: &p.pair,
            diff: &p.diff,
            matched: m,
        })
        .collect();
    let acc = accumulate_sharded(&evidence, cfg.scheme(), 1024);
    let fingerprint = pairs_fingerprint(train.iter().map(|p| &p.pair));
    let db = StatsDb::new(cfg.alpha, fingerprint, cfg.scheme(), acc, rewrites)?;
    Ok((db, matches))
}

pub fn featurize_pairs(
    variant: Variant,
    pairs: &[PreparedPair],
    matches: &[RewriteMatch],
    scheme: KeyScheme,
) -> Vec<(FeatureVector, Label)> {
    let spec = variant.spec();
    pairs
        .iter()
        .zip(matches)
        .map(|(p, m)| (featurize(&spec, &p.diff, m, scheme), p.pair.label))
        .collect()
}
