//! Corpus data model: creatives grouped into adgroups, JSONL I/O, serve
//! weights, and labeled creative pairs.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Display slot of an ad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Top,
    Rhs,
    Unknown,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Top, Slot::Rhs, Slot::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Top => "top",
            Slot::Rhs => "rhs",
            Slot::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Creative {
    pub creative_id: String,
    pub slot: Slot,
    /// Snippet lines; line `i` in this vector is line `i + 1` everywhere else.
    pub lines: Vec<String>,
    pub impressions: u64,
    pub clicks: u64,
}

impl Creative {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.clicks > self.impressions {
            return Err(format!(
                "clicks ({}) exceed impressions ({})",
                self.clicks, self.impressions
            ));
        }
        if self.lines.is_empty() {
            return Err("creative has no lines".into());
        }
        if let Some(i) = self.lines.iter().position(|l| l.trim().is_empty()) {
            return Err(format!("line {} is empty", i + 1));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdGroup {
    pub adgroup_id: String,
    pub keyword: String,
    pub creatives: Vec<Creative>,
}

impl AdGroup {
    /// Checks the record invariants. Errors carry `line` as given.
    pub fn validate(&self, line: usize) -> Result<()> {
        if self.creatives.is_empty() {
            return Err(Error::Validation {
                line,
                creative: None,
                reason: format!("adgroup {} has no creatives", self.adgroup_id),
            });
        }
        let mut seen = HashSet::new();
        for c in &self.creatives {
            c.validate().map_err(|reason| Error::Validation {
                line,
                creative: Some(c.creative_id.clone()),
                reason,
            })?;
            if !seen.insert(c.creative_id.as_str()) {
                return Err(Error::Validation {
                    line,
                    creative: Some(c.creative_id.clone()),
                    reason: "duplicate creative_id within adgroup".into(),
                });
            }
        }
        Ok(())
    }
}

/// Streaming reader over a corpus JSONL source, one adgroup per line.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<AdGroup>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = self.lines.next()?;
            self.line_no += 1;
            let line_no = self.line_no;
            let raw = match raw {
                Ok(raw) => raw,
                Err(e) => return Some(Err(Error::Stream(e))),
            };
            if raw.trim().is_empty() {
                continue;
            }
            let group: AdGroup = match serde_json::from_str(&raw) {
                Ok(g) => g,
                Err(source) => {
                    return Some(Err(Error::Parse {
                        line: line_no,
                        source,
                    }))
                }
            };
            return Some(group.validate(line_no).map(|_| group));
        }
    }
}

pub fn read_corpus<R: BufRead>(reader: R) -> CorpusReader<R> {
    CorpusReader {
        lines: reader.lines(),
        line_no: 0,
    }
}

/// Opens `path` and streams its adgroups in file order.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_corpus(BufReader::new(file)))
}

/// Loads the whole corpus into memory, failing on the first bad record.
pub fn load_corpus_vec(path: impl AsRef<Path>) -> Result<Vec<AdGroup>> {
    load_corpus(path)?.collect()
}

/// Writes the canonical form: compact JSON, one adgroup per line, LF endings.
pub fn write_corpus<'a, W: Write>(
    mut out: W,
    groups: impl IntoIterator<Item = &'a AdGroup>,
) -> Result<()> {
    for g in groups {
        serde_json::to_writer(&mut out, g)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Adgroup-normalized serve weights keyed by creative id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServeWeightTable {
    weights: BTreeMap<String, f64>,
}

impl ServeWeightTable {
    pub fn get(&self, creative_id: &str) -> Option<f64> {
        self.weights.get(creative_id).copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

fn smoothed_ctr(clicks: u64, impressions: u64, alpha: f64) -> f64 {
    (clicks as f64 + alpha) / (impressions as f64 + 2.0 * alpha)
}

/// Serve weight of each creative: its smoothed CTR over the pooled smoothed
/// CTR of the whole adgroup.
///
/// `alpha = 0` gives the unsmoothed ratio, which is only defined when every
/// creative has impressions and the group has at least one click.
pub fn compute_serve_weights(group: &AdGroup, alpha: f64) -> Result<ServeWeightTable> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
    }
    // pool the smoothed counts so identical creatives get exactly 1 and the
    // smoothed-impression-weighted mean is 1 for any alpha
    let n = group.creatives.len() as f64;
    let clicks: u64 = group.creatives.iter().map(|c| c.clicks).sum();
    let impressions: u64 = group.creatives.iter().map(|c| c.impressions).sum();
    let pooled = (clicks as f64 + n * alpha) / (impressions as f64 + 2.0 * n * alpha);
    let mut weights = BTreeMap::new();
    for c in &group.creatives {
        let sw = if group.creatives.len() == 1 {
            1.0
        } else {
            smoothed_ctr(c.clicks, c.impressions, alpha) / pooled
        };
        if !sw.is_finite() {
            return Err(Error::Config(format!(
                "serve weight of creative {} undefined with alpha = {alpha}",
                c.creative_id
            )));
        }
        weights.insert(c.creative_id.clone(), sw);
    }
    Ok(ServeWeightTable { weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    LeftBetter,
    RightBetter,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::LeftBetter => Label::RightBetter,
            Label::RightBetter => Label::LeftBetter,
        }
    }

    /// +1 for the positive class (left better), -1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Label::LeftBetter => 1.0,
            Label::RightBetter => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::LeftBetter => "left_better",
            Label::RightBetter => "right_better",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreativePair {
    pub adgroup_id: String,
    pub left: Creative,
    pub right: Creative,
    pub sw_left: f64,
    pub sw_right: f64,
    pub label: Label,
}

impl CreativePair {
    pub fn swapped(&self) -> CreativePair {
        CreativePair {
            adgroup_id: self.adgroup_id.clone(),
            left: self.right.clone(),
            right: self.left.clone(),
            sw_left: self.sw_right,
            sw_right: self.sw_left,
            label: self.label.flipped(),
        }
    }

    /// sw(left) - sw(right).
    pub fn sw_diff(&self) -> f64 {
        self.sw_left - self.sw_right
    }

    /// Slot used for slicing; the left creative's, since pairs share an adgroup.
    pub fn slot(&self) -> Slot {
        self.left.slot
    }
}

/// Seeded coin deciding whether the first creative of a pair goes left.
fn orientation_bit(seed: u64, adgroup_id: &str, a: &str, b: &str) -> bool {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [adgroup_id, a, b] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize()[0] & 1 == 1
}

/// All unordered creative pairs of `group` whose serve-weight gap is at least
/// `min_gap`, each oriented by a seeded coin. Pairs with identical serve
/// weights are never emitted since their label is undefined.
pub fn make_pairs(
    group: &AdGroup,
    weights: &ServeWeightTable,
    min_gap: f64,
    seed: u64,
) -> Vec<CreativePair> {
    let mut pairs = Vec::new();
    let cs = &group.creatives;
    for i in 0..cs.len() {
        for j in (i + 1)..cs.len() {
            let (Some(swi), Some(swj)) =
                (weights.get(&cs[i].creative_id), weights.get(&cs[j].creative_id))
            else {
                continue;
            };
            let gap = (swi - swj).abs();
            if gap == 0.0 || gap < min_gap {
                continue;
            }
            let flip = orientation_bit(seed, &group.adgroup_id, &cs[i].creative_id, &cs[j].creative_id);
            let (l, r, swl, swr) = if flip {
                (&cs[j], &cs[i], swj, swi)
            } else {
                (&cs[i], &cs[j], swi, swj)
            };
            pairs.push(CreativePair {
                adgroup_id: group.adgroup_id.clone(),
                left: l.clone(),
                right: r.clone(),
                sw_left: swl,
                sw_right: swr,
                label: if swl > swr {
                    Label::LeftBetter
                } else {
                    Label::RightBetter
                },
            });
        }
    }
    pairs
}

/// Serve weights and pairs for every adgroup, in corpus order.
pub fn build_pairs(groups: &[AdGroup], alpha: f64, min_gap: f64, seed: u64) -> Result<Vec<CreativePair>> {
    let mut out = Vec::new();
    for g in groups {
        let sw = compute_serve_weights(g, alpha)?;
        out.extend(make_pairs(g, &sw, min_gap, seed));
    }
    Ok(out)
}

/// Content hash of a pair set, independent of order.
pub fn pairs_fingerprint<'a>(pairs: impl IntoIterator<Item = &'a CreativePair>) -> String {
    let mut ids: Vec<String> = pairs
        .into_iter()
        .map(|p| {
            format!(
                "{}\t{}\t{}\t{}",
                p.adgroup_id,
                p.left.creative_id,
                p.right.creative_id,
                p.label.as_str()
            )
        })
        .collect();
    ids.sort();
    let mut h = Sha256::new();
    for id in &ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
