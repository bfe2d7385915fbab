//! Feature statistics: serve-weight sign counts per term, position, rewrite,
//! and rewrite position pair, read back as Laplace-smoothed odds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CreativePair;
use crate::error::{Error, Result};
use crate::features::{PositionedTerm, TermDiff};
use crate::rewrite::{RewriteKey, RewriteMatch, RewriteTable};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKey {
    Term {
        text: String,
    },
    TermPosition {
        line: usize,
        pos: usize,
    },
    Rewrite {
        src: String,
        dst: String,
    },
    RewritePositionPair {
        src_line: usize,
        src_pos: usize,
        dst_line: usize,
        dst_pos: usize,
    },
}

impl FeatureKey {
    pub fn term(text: impl Into<String>) -> Self {
        FeatureKey::Term { text: text.into() }
    }

    pub fn rewrite(src: impl Into<String>, dst: impl Into<String>) -> Self {
        FeatureKey::Rewrite {
            src: src.into(),
            dst: dst.into(),
        }
    }

    pub fn is_position(&self) -> bool {
        matches!(self, FeatureKey::TermPosition { .. } | FeatureKey::RewritePositionPair { .. })
    }

    /// The same feature seen from the other creative; identity for terms.
    pub fn reversed(&self) -> FeatureKey {
        match self {
            FeatureKey::Rewrite { src, dst } => FeatureKey::Rewrite {
                src: dst.clone(),
                dst: src.clone(),
            },
            FeatureKey::RewritePositionPair {
                src_line,
                src_pos,
                dst_line,
                dst_pos,
            } => FeatureKey::RewritePositionPair {
                src_line: *dst_line,
                src_pos: *dst_pos,
                dst_line: *src_line,
                dst_pos: *src_pos,
            },
            k => k.clone(),
        }
    }
}

/// Maps term coordinates onto position keys, optionally bucketing positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyScheme {
    /// Positions per bucket; 1 keeps exact positions.
    pub position_bucket: usize,
}

impl Default for KeyScheme {
    fn default() -> Self {
        KeyScheme { position_bucket: 1 }
    }
}

impl KeyScheme {
    pub fn bucket(&self, pos: usize) -> usize {
        let w = self.position_bucket.max(1);
        (pos - 1) / w * w + 1
    }

    pub fn term_position(&self, t: &PositionedTerm) -> FeatureKey {
        FeatureKey::TermPosition {
            line: t.line,
            pos: self.bucket(t.pos),
        }
    }

    pub fn rewrite_position(&self, src: &PositionedTerm, dst: &PositionedTerm) -> FeatureKey {
        FeatureKey::RewritePositionPair {
            src_line: src.line,
            src_pos: self.bucket(src.pos),
            dst_line: dst.line,
            dst_pos: self.bucket(dst.pos),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureStat {
    pub n_plus: u64,
    pub n_minus: u64,
}

impl FeatureStat {
    pub fn new(n_plus: u64, n_minus: u64) -> Self {
        FeatureStat { n_plus, n_minus }
    }

    pub fn observe(&mut self, positive: bool) {
        if positive {
            self.n_plus += 1;
        } else {
            self.n_minus += 1;
        }
    }

    pub fn merge(&mut self, other: &FeatureStat) {
        self.n_plus += other.n_plus;
        self.n_minus += other.n_minus;
    }

    pub fn total(&self) -> u64 {
        self.n_plus + self.n_minus
    }

    pub fn flipped(&self) -> FeatureStat {
        FeatureStat::new(self.n_minus, self.n_plus)
    }
}

/// Laplace-smoothed probability of a positive serve-weight difference.
pub fn smoothed_p(stat: FeatureStat, alpha: f64) -> f64 {
    (stat.n_plus as f64 + alpha) / (stat.total() as f64 + 2.0 * alpha)
}

/// `p / (1 - p)` of [`smoothed_p`], computed without the subtraction.
pub fn odds(stat: FeatureStat, alpha: f64) -> f64 {
    (stat.n_plus as f64 + alpha) / (stat.n_minus as f64 + alpha)
}

/// Per-shard counting state. Shards merge commutatively.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    pub entries: BTreeMap<FeatureKey, FeatureStat>,
}

impl StatsAccumulator {
    fn bump(&mut self, key: FeatureKey, positive: bool) {
        self.entries.entry(key).or_default().observe(positive);
    }

    /// Adds one pair's observations; a zero serve-weight difference adds none.
    pub fn add(&mut self, pair: &CreativePair, diff: &TermDiff, matched: &RewriteMatch, scheme: KeyScheme) {
        let d = pair.sw_diff();
        if d == 0.0 {
            return;
        }
        let left_better = d > 0.0;
        for t in &diff.only_left {
            self.bump(FeatureKey::term(t.text.as_str()), left_better);
            self.bump(scheme.term_position(t), left_better);
        }
        for t in &diff.only_right {
            self.bump(FeatureKey::term(t.text.as_str()), !left_better);
            self.bump(scheme.term_position(t), !left_better);
        }
        // src is the left phrase; positive when the right (dst) side wins
        for (a, b) in &matched.pairs {
            let rw = FeatureKey::rewrite(a.text.as_str(), b.text.as_str());
            let pp = scheme.rewrite_position(a, b);
            self.bump(rw.reversed(), left_better);
            self.bump(pp.reversed(), left_better);
            self.bump(rw, !left_better);
            self.bump(pp, !left_better);
        }
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        for (k, s) in &other.entries {
            self.entries.entry(k.clone()).or_default().merge(s);
        }
    }
}

/// One pair with its diff and rewrite match, as fed to [`accumulate`].
#[derive(Debug, Clone, Copy)]
pub struct PairEvidence<'a> {
    pub pair: &'a CreativePair,
    pub diff: &'a TermDiff,
    pub matched: &'a RewriteMatch,
}

/// Single-pass accumulation over `items`.
pub fn accumulate<'a>(items: impl IntoIterator<Item = PairEvidence<'a>>, scheme: KeyScheme) -> StatsAccumulator {
    let mut acc = StatsAccumulator::default();
    for e in items {
        acc.add(e.pair, e.diff, e.matched, scheme);
    }
    acc
}

/// Accumulation over `shard_size` chunks merged in parallel.
pub fn accumulate_sharded(items: &[PairEvidence<'_>], scheme: KeyScheme, shard_size: usize) -> StatsAccumulator {
    use rayon::prelude::*;
    items
        .par_chunks(shard_size.max(1))
        .map(|chunk| accumulate(chunk.iter().copied(), scheme))
        .reduce(StatsAccumulator::default, |mut a, b| {
            a.merge(&b);
            a
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsDb {
    pub alpha: f64,
    pub fingerprint: String,
    pub scheme: KeyScheme,
    pub entries: BTreeMap<FeatureKey, FeatureStat>,
    /// Single-rewrite bootstrap table used for greedy matching.
    pub rewrites: RewriteTable,
}

impl StatsDb {
    pub fn new(alpha: f64, fingerprint: String, scheme: KeyScheme, acc: StatsAccumulator, rewrites: RewriteTable) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(StatsDb {
            alpha,
            fingerprint,
            scheme,
            entries: acc.entries,
            rewrites,
        })
    }

    /// Absent keys read as empty counts.
    pub fn get(&self, key: &FeatureKey) -> FeatureStat {
        self.entries.get(key).copied().unwrap_or_default()
    }

    pub fn smoothed_p(&self, key: &FeatureKey) -> f64 {
        smoothed_p(self.get(key), self.alpha)
    }

    pub fn odds(&self, key: &FeatureKey) -> f64 {
        odds(self.get(key), self.alpha)
    }

    pub fn rewrite_lookup(&self) -> crate::rewrite::SmoothedRewrites<'_> {
        self.rewrites.with_alpha(self.alpha)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = StatsFile {
            alpha: self.alpha,
            fingerprint: self.fingerprint.clone(),
            position_bucket: self.scheme.position_bucket,
            entries: self
                .entries
                .iter()
                .map(|(k, s)| StatsEntry {
                    key: k.clone(),
                    n_plus: s.n_plus,
                    n_minus: s.n_minus,
                })
                .collect(),
            rewrites: self
                .rewrites
                .counts
                .iter()
                .map(|(k, s)| RewriteEntry {
                    src: k.src.clone(),
                    dst: k.dst.clone(),
                    n_plus: s.n_plus,
                    n_minus: s.n_minus,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StatsFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    fn from_file(file: StatsFile) -> Result<Self> {
        let acc = StatsAccumulator {
            entries: file
                .entries
                .into_iter()
                .map(|e| (e.key, FeatureStat::new(e.n_plus, e.n_minus)))
                .collect(),
        };
        let rewrites = RewriteTable {
            counts: file
                .rewrites
                .into_iter()
                .map(|e| (RewriteKey::new(e.src, e.dst), FeatureStat::new(e.n_plus, e.n_minus)))
                .collect(),
        };
        let scheme = KeyScheme {
            position_bucket: file.position_bucket,
        };
        StatsDb::new(file.alpha, file.fingerprint, scheme, acc, rewrites)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        out.write_all(self.to_json()?.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file: StatsFile = serde_json::from_reader(BufReader::new(file))?;
        Self::from_file(file)
    }
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    alpha: f64,
    fingerprint: String,
    #[serde(default = "one")]
    position_bucket: usize,
    entries: Vec<StatsEntry>,
    #[serde(default)]
    rewrites: Vec<RewriteEntry>,
}

fn one() -> usize {
    1
}

#[derive(Serialize, Deserialize)]
struct StatsEntry {
    key: FeatureKey,
    n_plus: u64,
    n_minus: u64,
}

#[derive(Serialize, Deserialize)]
struct RewriteEntry {
    src: String,
    dst: String,
    n_plus: u64,
    n_minus: u64,
}
