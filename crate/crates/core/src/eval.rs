//! Cross-validation by adgroup, precision/recall/F over the left_better
//! class, and the six-variant ablation with slot slices and learned
//! position weights.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{pairs_fingerprint, AdGroup, Label, Slot};
use crate::error::{Error, Result};
use crate::model::{label_of, train_variant, FeatureVector, TrainConfig, TrainedModel, Variant};
use crate::pipeline::{build_stats, featurize_pairs, match_pairs, prepare_pairs, PipelineConfig, PreparedPair};
use crate::statsdb::FeatureKey;

/// Splits items into `k` folds so that items sharing a group land in the
/// same fold. Groups are shuffled with `seed` and dealt round-robin, so
/// fold group counts differ by at most one. Returns item indices per fold.
pub fn kfold_split<T>(items: &[T], group_of: impl Fn(&T) -> &str, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let groups: BTreeSet<&str> = items.iter().map(&group_of).collect();
    if k < 2 || k > groups.len() {
        return Err(Error::Folds { k, groups: groups.len() });
    }
    let mut order: Vec<&str> = groups.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    let mut folds = vec![Vec::new(); k];
    for (i, item) in items.iter().enumerate() {
        folds[fold_of[group_of(item)]].push(i);
    }
    Ok(folds)
}

/// Confusion counts with left_better as the positive class. `ties` counts
/// predictions whose score was exactly 0 (predicted right_better).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub ties: u64,
}

impl Metrics {
    pub fn record(&mut self, truth: Label, score: f64) {
        if score == 0.0 {
            self.ties += 1;
        }
        match (truth, label_of(score)) {
            (Label::LeftBetter, Label::LeftBetter) => self.tp += 1,
            (Label::RightBetter, Label::LeftBetter) => self.fp += 1,
            (Label::LeftBetter, Label::RightBetter) => self.fn_ += 1,
            (Label::RightBetter, Label::RightBetter) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, o: &Metrics) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.ties += o.ties;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_measure(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate(model: &TrainedModel, test: &[(FeatureVector, Label)]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut m = Metrics::default();
    for (x, label) in test {
        m.record(*label, model.score(x));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub k: usize,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            k: 10,
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub overall: Metrics,
    pub folds: Vec<Metrics>,
    pub slots: BTreeMap<Slot, Metrics>,
    pub mean_bias: f64,
}

impl VariantResult {
    pub fn fold_f_std(&self) -> f64 {
        let f: Vec<f64> = self.folds.iter().map(|m| m.f_measure()).collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        (f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / f.len() as f64).sqrt()
    }
}

/// Fold-averaged position multiplier of one coordinate. `kind` is "term"
/// for term positions and "rewrite" for rewrites kept in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionWeight {
    pub variant: Variant,
    pub kind: String,
    pub line: usize,
    pub pos: usize,
    pub weight: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: AblationConfig,
    pub pairs: usize,
    pub adgroups: usize,
    pub variants: Vec<VariantResult>,
    pub positions: Vec<PositionWeight>,
}

/// Overall metrics, per-slot metrics, bias and position weights.
type VariantFold = (Metrics, BTreeMap<Slot, Metrics>, f64, BTreeMap<FeatureKey, f64>);

struct FoldOutcome {
    per_variant: Vec<VariantFold>,
}

fn run_fold(pairs: &[PreparedPair], test_idx: &[usize], cfg: &AblationConfig) -> Result<FoldOutcome> {
    let test_set: BTreeSet<usize> = test_idx.iter().copied().collect();
    let (train, test): (Vec<&PreparedPair>, Vec<&PreparedPair>) = {
        let mut tr = Vec::new();
        let mut te = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            if test_set.contains(&i) {
                te.push(p);
            } else {
                tr.push(p);
            }
        }
        (tr, te)
    };
    let train: Vec<PreparedPair> = train.into_iter().cloned().collect();
    let test: Vec<PreparedPair> = test.into_iter().cloned().collect();

    let (db, train_matches) = build_stats(&train, &cfg.pipeline)?;
    // the database must have seen exactly the training pairs
    let expected = pairs_fingerprint(train.iter().map(|p| &p.pair));
    if db.fingerprint != expected {
        return Err(Error::FingerprintMismatch {
            expected,
            found: db.fingerprint.clone(),
        });
    }
    let test_matches = match_pairs(&test, &db.rewrite_lookup(), cfg.pipeline.match_threshold);
    let scheme = db.scheme;

    let mut per_variant = Vec::with_capacity(Variant::ALL.len());
    for v in Variant::ALL {
        let train_x = featurize_pairs(v, &train, &train_matches, scheme);
        let test_x = featurize_pairs(v, &test, &test_matches, scheme);
        let model = train_variant(v, &train_x, &db, &cfg.train)?;
        let mut overall = Metrics::default();
        let mut slots: BTreeMap<Slot, Metrics> = BTreeMap::new();
        for ((x, label), p) in test_x.iter().zip(&test) {
            let s = model.score(x);
            overall.record(*label, s);
            slots.entry(p.pair.slot()).or_default().record(*label, s);
        }
        log::debug!("{v}: fold F = {:.4}", overall.f_measure());
        per_variant.push((overall, slots, model.bias(), model.position_weights()));
    }
    Ok(FoldOutcome { per_variant })
}

/// Position weights kept for plotting: term positions, and rewrites that
/// keep their coordinates.
fn series_point(key: &FeatureKey) -> Option<(&'static str, usize, usize)> {
    match key {
        FeatureKey::TermPosition { line, pos } => Some(("term", *line, *pos)),
        FeatureKey::RewritePositionPair {
            src_line,
            src_pos,
            dst_line,
            dst_pos,
        } if src_line == dst_line && src_pos == dst_pos => Some(("rewrite", *src_line, *src_pos)),
        _ => None,
    }
}

/// Builds pairs, splits them by adgroup, and per fold builds statistics on
/// the training part only, trains all six variants and scores the held-out
/// part.
pub fn run_ablation(groups: &[AdGroup], cfg: &AblationConfig) -> Result<AblationReport> {
    let pairs = prepare_pairs(groups, &cfg.pipeline)?;
    let folds = kfold_split(&pairs, |p| p.pair.adgroup_id.as_str(), cfg.k, cfg.pipeline.seed)?;
    log::info!("{} pairs from {} adgroups in {} folds", pairs.len(), groups.len(), cfg.k);
    let outcomes = folds
        .par_iter()
        .map(|test_idx| run_fold(&pairs, test_idx, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut variants = Vec::new();
    let mut positions = Vec::new();
    for (vi, v) in Variant::ALL.into_iter().enumerate() {
        let mut overall = Metrics::default();
        let mut slots: BTreeMap<Slot, Metrics> = BTreeMap::new();
        let mut fold_metrics = Vec::new();
        let mut bias = 0.0;
        let mut sums: BTreeMap<(&'static str, usize, usize), (f64, usize)> = BTreeMap::new();
        for o in &outcomes {
            let (m, s, b, p) = &o.per_variant[vi];
            overall.merge(m);
            fold_metrics.push(*m);
            for (slot, sm) in s {
                slots.entry(*slot).or_default().merge(sm);
            }
            bias += b;
            for (k, w) in p {
                if let Some(point) = series_point(k) {
                    let e = sums.entry(point).or_default();
                    e.0 += w;
                    e.1 += 1;
                }
            }
        }
        for ((kind, line, pos), (sum, n)) in sums {
            positions.push(PositionWeight {
                variant: v,
                kind: kind.to_string(),
                line,
                pos,
                weight: sum / n as f64,
                folds: n,
            });
        }
        variants.push(VariantResult {
            variant: v,
            overall,
            folds: fold_metrics,
            slots,
            mean_bias: bias / outcomes.len() as f64,
        });
    }
    Ok(AblationReport {
        config: cfg.clone(),
        pairs: pairs.len(),
        adgroups: groups.len(),
        variants,
        positions,
    })
}

impl AblationReport {
    pub fn variant(&self, v: Variant) -> &VariantResult {
        self.variants
            .iter()
            .find(|r| r.variant == v)
            .expect("report holds every variant")
    }

    pub fn f(&self, v: Variant) -> f64 {
        self.variant(v).overall.f_measure()
    }

    /// Fold-averaged position weights of one variant, kind and line, by
    /// position.
    pub fn position_series(&self, v: Variant, kind: &str, line: usize) -> Vec<(usize, f64)> {
        self.positions
            .iter()
            .filter(|p| p.variant == v && p.kind == kind && p.line == line)
            .map(|p| (p.pos, p.weight))
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} pairs, {} adgroups, {}-fold cross-validation (seed {})",
            self.pairs, self.adgroups, self.config.k, self.config.pipeline.seed
        );
        let _ = writeln!(
            s,
            "{:<4} {:<30} {:>9} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
            "", "features", "recall", "precision", "F", "F std", "F top", "F rhs", "ties"
        );
        for r in &self.variants {
            let slot_f = |slot| r.slots.get(&slot).map(|m| format!("{:.3}", m.f_measure())).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<4} {:<30} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7} {:>7}",
                r.variant.to_string(),
                r.variant.description(),
                r.overall.recall(),
                r.overall.precision(),
                r.overall.f_measure(),
                r.fold_f_std(),
                slot_f(Slot::Top),
                slot_f(Slot::Rhs),
                r.overall.ties
            );
        }
        s
    }

    /// One row per variant and scope (overall, each fold, each slot).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,scope,tp,fp,fn,tn,ties,precision,recall,f\n");
        let mut row = |v: Variant, scope: &str, m: &Metrics| {
            let _ = writeln!(
                s,
                "{v},{scope},{},{},{},{},{},{:.6},{:.6},{:.6}",
                m.tp,
                m.fp,
                m.fn_,
                m.tn,
                m.ties,
                m.precision(),
                m.recall(),
                m.f_measure()
            );
        };
        for r in &self.variants {
            row(r.variant, "overall", &r.overall);
            for (i, m) in r.folds.iter().enumerate() {
                row(r.variant, &format!("fold{i}"), m);
            }
            for (slot, m) in &r.slots {
                row(r.variant, slot.as_str(), m);
            }
        }
        s
    }

    pub fn positions_csv(&self) -> String {
        let mut s = String::from("variant,kind,line,pos,weight,folds\n");
        for p in &self.positions {
            let _ = writeln!(s, "{},{},{},{},{:.6},{}", p.variant, p.kind, p.line, p.pos, p.weight, p.folds);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split_by_group() {
        let items: Vec<String> = (0..100).flat_map(|g| (0..3).map(move |_| format!("g{g}"))).collect();
        let folds = kfold_split(&items, |s| s.as_str(), 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        for f in &folds {
            let groups: BTreeSet<&str> = f.iter().map(|i| items[*i].as_str()).collect();
            assert_eq!(groups.len(), 10);
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..items.len()).collect::<Vec<_>>());
        assert_eq!(folds, kfold_split(&items, |s| s.as_str(), 10, 7).unwrap());
        assert_ne!(folds, kfold_split(&items, |s| s.as_str(), 10, 8).unwrap());
    }

    #[test]
    fn fold_count_errors() {
        let items = vec!["a", "b", "c"];
        assert!(kfold_split(&items, |s| s, 1, 0).is_err());
        assert!(kfold_split(&items, |s| s, 4, 0).is_err());
        assert!(kfold_split(&items, |s| s, 3, 0).is_ok());
    }

    #[test]
    fn metric_formulas() {
        let m = Metrics {
            tp: 7,
            fp: 3,
            fn_: 3,
            tn: 5,
            ties: 0,
        };
        assert!((m.precision() - 0.7).abs() < 1e-12);
        assert!((m.recall() - 0.7).abs() < 1e-12);
        assert!((m.f_measure() - 0.7).abs() < 1e-12);
        assert_eq!(Metrics::default().f_measure(), 0.0);
    }

    #[test]
    fn perfect_and_flipped() {
        let mut good = Metrics::default();
        let mut bad = Metrics::default();
        for (label, s) in [(Label::LeftBetter, 1.0), (Label::RightBetter, -2.0), (Label::LeftBetter, 0.5)] {
            good.record(label, s);
            bad.record(label, -s);
        }
        assert_eq!((good.precision(), good.recall(), good.f_measure()), (1.0, 1.0, 1.0));
        assert_eq!((bad.precision(), bad.recall(), bad.f_measure()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_score_is_a_counted_tie() {
        let mut m = Metrics::default();
        m.record(Label::RightBetter, 0.0);
        assert_eq!((m.tn, m.ties), (1, 1));
    }
}
