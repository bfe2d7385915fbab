//! Pair featurization for the six model variants, linear and coupled
//! position-relevance classifiers, and their persistence.

mod coupled;
pub mod optim;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{PositionedTerm, TermDiff};
use crate::rewrite::RewriteMatch;
use crate::statsdb::{FeatureKey, KeyScheme, StatsDb};

pub use coupled::{train_coupled, train_coupled_from, CoupledModel, Freeze};
pub use optim::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::M1, Variant::M2, Variant::M3, Variant::M4, Variant::M5, Variant::M6];

    pub fn spec(self) -> ModelSpec {
        let (use_terms, use_rewrites, use_positions) = match self {
            Variant::M1 => (true, false, false),
            Variant::M2 => (true, false, true),
            Variant::M3 => (false, true, false),
            Variant::M4 => (false, true, true),
            Variant::M5 => (true, true, false),
            Variant::M6 => (true, true, true),
        };
        ModelSpec {
            variant: self,
            use_terms,
            use_rewrites,
            use_positions,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::M1 => "terms",
            Variant::M2 => "terms + positions",
            Variant::M3 => "rewrites",
            Variant::M4 => "rewrites + positions",
            Variant::M5 => "terms + rewrites",
            Variant::M6 => "terms + rewrites + positions",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model variant {s:?} (expected M1..M6)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub use_terms: bool,
    pub use_rewrites: bool,
    pub use_positions: bool,
}

impl ModelSpec {
    fn enables(&self, key: &FeatureKey) -> bool {
        match key {
            FeatureKey::Term { .. } => self.use_terms,
            FeatureKey::Rewrite { .. } => self.use_rewrites,
            FeatureKey::TermPosition { .. } => self.use_terms && self.use_positions,
            FeatureKey::RewritePositionPair { .. } => self.use_rewrites && self.use_positions,
        }
    }
}

/// One piece of evidence: a relevance feature, the position feature that
/// scales it in the position variants, and +1 / -1 for left / right side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub rel: FeatureKey,
    pub pos: Option<FeatureKey>,
    pub sign: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<FeatureEntry>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn negated(&self) -> FeatureVector {
        FeatureVector {
            entries: self
                .entries
                .iter()
                .map(|e| FeatureEntry {
                    sign: -e.sign,
                    ..e.clone()
                })
                .collect(),
        }
    }

    /// Flattened view: every relevance and position key with its summed
    /// signed indicator; keys that cancel out are dropped.
    pub fn sparse(&self) -> BTreeMap<FeatureKey, f64> {
        let mut out: BTreeMap<FeatureKey, f64> = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.rel.clone()).or_default() += e.sign;
            if let Some(p) = &e.pos {
                *out.entry(p.clone()).or_default() += e.sign;
            }
        }
        out.retain(|_, v| *v != 0.0);
        out
    }
}

fn term_entry(t: &PositionedTerm, sign: f64, spec: &ModelSpec, scheme: KeyScheme) -> FeatureEntry {
    FeatureEntry {
        rel: FeatureKey::term(t.text.as_str()),
        pos: spec.use_positions.then(|| scheme.term_position(t)),
        sign,
    }
}

/// Rewrite evidence in a canonical orientation: the key always runs from the
/// lexicographically smaller phrase to the larger one, and the sign says
/// which side carries the destination phrase.
fn rewrite_entry(l: &PositionedTerm, r: &PositionedTerm, spec: &ModelSpec, scheme: KeyScheme) -> FeatureEntry {
    let (src, dst, sign) = if l.text <= r.text { (l, r, -1.0) } else { (r, l, 1.0) };
    FeatureEntry {
        rel: FeatureKey::rewrite(src.text.as_str(), dst.text.as_str()),
        pos: spec.use_positions.then(|| scheme.rewrite_position(src, dst)),
        sign,
    }
}

/// Builds the feature vector of a pair. Term-only variants use every diff
/// phrase; variants with rewrites use matched pairs plus, if terms are
/// enabled, the unmatched leftovers.
pub fn featurize(spec: &ModelSpec, diff: &TermDiff, matched: &RewriteMatch, scheme: KeyScheme) -> FeatureVector {
    let mut entries = Vec::new();
    if spec.use_rewrites {
        for (l, r) in &matched.pairs {
            entries.push(rewrite_entry(l, r, spec, scheme));
        }
        if spec.use_terms {
            entries.extend(matched.leftover_left.iter().map(|t| term_entry(t, 1.0, spec, scheme)));
            entries.extend(matched.leftover_right.iter().map(|t| term_entry(t, -1.0, spec, scheme)));
        }
    } else if spec.use_terms {
        entries.extend(diff.only_left.iter().map(|t| term_entry(t, 1.0, spec, scheme)));
        entries.extend(diff.only_right.iter().map(|t| term_entry(t, -1.0, spec, scheme)));
    }
    FeatureVector { entries }
}

/// Log odds from the statistics database for every key of an enabled
/// feature class.
pub fn init_weights(spec: &ModelSpec, db: &StatsDb) -> BTreeMap<FeatureKey, f64> {
    db.entries
        .keys()
        .filter(|k| spec.enables(k))
        .map(|k| (k.clone(), db.odds(k).ln()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub solver: SolverConfig,
    /// Upper bound on position/relevance alternations of the coupled trainer.
    pub max_alternations: usize,
    /// Coupled training stops once no weight moves by more than this.
    pub alternation_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            solver: SolverConfig::default(),
            max_alternations: 8,
            alternation_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub lambda: f64,
    pub iterations: usize,
    pub objective: f64,
    #[serde(default)]
    pub alternations: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub key: FeatureKey,
    pub weight: f64,
}

pub(crate) mod weight_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<FeatureKey, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let list: Vec<WeightEntry> = map
            .iter()
            .map(|(k, w)| WeightEntry {
                key: k.clone(),
                weight: *w,
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<FeatureKey, f64>, D::Error> {
        let list = Vec::<WeightEntry>::deserialize(d)?;
        Ok(list.into_iter().map(|e| (e.key, e.weight)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub spec: ModelSpec,
    pub bias: f64,
    #[serde(with = "weight_list")]
    pub weights: BTreeMap<FeatureKey, f64>,
    pub meta: TrainMeta,
}

impl LinearModel {
    pub fn score(&self, x: &FeatureVector) -> f64 {
        self.bias
            + x.sparse()
                .iter()
                .map(|(k, v)| v * self.weights.get(k).copied().unwrap_or(0.0))
                .sum::<f64>()
    }
}

/// Maps the keys of a data set onto dense indices in key order.
pub(crate) fn index_keys<'a>(keys: impl Iterator<Item = &'a FeatureKey>) -> BTreeMap<FeatureKey, u32> {
    let mut index: BTreeMap<FeatureKey, u32> = keys.map(|k| (k.clone(), 0)).collect();
    for (i, v) in index.values_mut().enumerate() {
        *v = i as u32;
    }
    index
}

/// Fits an L1-regularized logistic regression on the flattened features,
/// starting from `init` (missing keys start at 0).
pub fn train_l1(
    data: &[(FeatureVector, Label)],
    spec: ModelSpec,
    init: &BTreeMap<FeatureKey, f64>,
    cfg: &SolverConfig,
    fingerprint: &str,
) -> Result<LinearModel> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let flat: Vec<BTreeMap<FeatureKey, f64>> = data.iter().map(|(x, _)| x.sparse()).collect();
    let index = index_keys(flat.iter().flat_map(|m| m.keys()));
    let rows = flat
        .iter()
        .map(|m| m.iter().map(|(k, v)| (index[k], *v)).collect())
        .collect();
    let y = data.iter().map(|(_, l)| l.sign()).collect();
    let problem = optim::Problem::new(rows, y, index.len());
    let w0 = index.keys().map(|k| init.get(k).copied().unwrap_or(0.0)).collect();
    let sol = optim::minimize(&problem, w0, 0.0, cfg)?;
    let weights = index.keys().cloned().zip(sol.w).filter(|(_, w)| *w != 0.0).collect();
    Ok(LinearModel {
        spec,
        bias: sol.b,
        weights,
        meta: TrainMeta {
            lambda: cfg.lambda,
            iterations: sol.iterations,
            objective: sol.objective,
            alternations: 0,
            fingerprint: fingerprint.to_string(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Linear(LinearModel),
    Coupled(CoupledModel),
}

/// Left wins only on a strictly positive score.
pub fn label_of(score: f64) -> Label {
    if score > 0.0 {
        Label::LeftBetter
    } else {
        Label::RightBetter
    }
}

impl TrainedModel {
    pub fn spec(&self) -> ModelSpec {
        match self {
            TrainedModel::Linear(m) => m.spec,
            TrainedModel::Coupled(m) => m.spec,
        }
    }

    pub fn meta(&self) -> &TrainMeta {
        match self {
            TrainedModel::Linear(m) => &m.meta,
            TrainedModel::Coupled(m) => &m.meta,
        }
    }

    pub fn bias(&self) -> f64 {
        match self {
            TrainedModel::Linear(m) => m.bias,
            TrainedModel::Coupled(m) => m.bias,
        }
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        match self {
            TrainedModel::Linear(m) => m.score(x),
            TrainedModel::Coupled(m) => m.score(x),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Label {
        label_of(self.score(x))
    }

    /// Learned relevance weights (the only weights of a linear model).
    pub fn relevance_weights(&self) -> &BTreeMap<FeatureKey, f64> {
        match self {
            TrainedModel::Linear(m) => &m.weights,
            TrainedModel::Coupled(m) => &m.relevance,
        }
    }

    /// Learned position multipliers; empty for linear models.
    pub fn position_weights(&self) -> BTreeMap<FeatureKey, f64> {
        match self {
            TrainedModel::Linear(_) => BTreeMap::new(),
            TrainedModel::Coupled(m) => m.positions.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Trains a variant: position variants use the coupled trainer, the rest
/// plain L1 logistic regression, both initialized from `db`.
pub fn train_variant(
    variant: Variant,
    data: &[(FeatureVector, Label)],
    db: &StatsDb,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let spec = variant.spec();
    if spec.use_positions {
        Ok(TrainedModel::Coupled(train_coupled(data, spec, db, cfg)?))
    } else {
        let init = init_weights(&spec, db);
        Ok(TrainedModel::Linear(train_l1(data, spec, &init, &cfg.solver, &db.fingerprint)?))
    }
}
