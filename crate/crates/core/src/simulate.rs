//! Generative micro-browsing click simulator.
//!
//! Every impression draws an examination bit for each term of the snippet;
//! the perceived relevance is the product of the relevances of the examined
//! terms, and the click is a Bernoulli draw on that relevance scaled by the
//! slot examination probability and a base click scale.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{AdGroup, Creative, Slot};
use crate::error::{Error, Result};
use crate::features::{tokenize, PositionedTerm};

/// Term relevance lookup; unknown terms get `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabModel {
    pub relevance: BTreeMap<String, f64>,
    pub default: f64,
}

impl VocabModel {
    pub fn new(default: f64) -> Self {
        VocabModel {
            relevance: BTreeMap::new(),
            default,
        }
    }

    pub fn with(mut self, term: &str, r: f64) -> Self {
        self.relevance.insert(term.to_string(), r);
        self
    }

    pub fn get(&self, term: &str) -> f64 {
        self.relevance.get(term).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: f64| !(r > 0.0 && r <= 1.0);
        if bad(self.default) {
            return Err(Error::Config(format!("default relevance {} outside (0, 1]", self.default)));
        }
        if let Some((t, r)) = self.relevance.iter().find(|(_, r)| bad(**r)) {
            return Err(Error::Config(format!("relevance of {t:?} is {r}, outside (0, 1]")));
        }
        Ok(())
    }
}

/// Per-coordinate term examination probabilities plus per-slot result
/// examination probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExaminationModel {
    /// `matrix[line - 1][pos - 1]`.
    pub matrix: Vec<Vec<f64>>,
    pub slot: BTreeMap<Slot, f64>,
}

impl ExaminationModel {
    pub fn uniform(lines: usize, positions: usize, e: f64) -> Self {
        ExaminationModel {
            matrix: vec![vec![e; positions]; lines],
            slot: Slot::ALL.iter().map(|s| (*s, 1.0)).collect(),
        }
    }

    pub fn prob(&self, line: usize, pos: usize) -> Result<f64> {
        line.checked_sub(1)
            .and_then(|l| self.matrix.get(l))
            .and_then(|row| pos.checked_sub(1).and_then(|p| row.get(p)))
            .copied()
            .ok_or(Error::OutOfBounds { line, pos })
    }

    pub fn slot_prob(&self, slot: Slot) -> f64 {
        self.slot.get(&slot).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.matrix.iter().enumerate() {
            if let Some(e) = row.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                return Err(Error::Config(format!("examination {e} on line {} outside [0, 1]", i + 1)));
            }
        }
        if let Some((s, p)) = self.slot.iter().find(|(_, p)| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Config(format!("slot examination for {} is {p}, outside (0, 1]", s.as_str())));
        }
        Ok(())
    }
}

/// Draws an independent examination bit for each term at its coordinate.
pub fn examine_terms(terms: &[PositionedTerm], exam: &ExaminationModel, rng: &mut impl RngCore) -> Result<Vec<bool>> {
    let probs = terms
        .iter()
        .map(|t| exam.prob(t.line, t.pos))
        .collect::<Result<Vec<_>>>()?;
    Ok(probs.into_iter().map(|e| rng.random::<f64>() < e).collect())
}

/// Product of the relevances of the examined terms.
pub fn snippet_relevance(terms: &[PositionedTerm], examined: &[bool], vocab: &VocabModel) -> f64 {
    assert_eq!(terms.len(), examined.len(), "one examination bit per term");
    terms
        .iter()
        .zip(examined)
        .filter(|(_, v)| **v)
        .map(|(t, _)| vocab.get(&t.text))
        .product()
}

/// Log relevance ratio of snippet `r` over snippet `s` under fixed
/// examination vectors.
pub fn oracle_score(
    r_terms: &[PositionedTerm],
    v: &[bool],
    s_terms: &[PositionedTerm],
    w: &[bool],
    vocab: &VocabModel,
) -> f64 {
    let side = |terms: &[PositionedTerm], bits: &[bool]| -> f64 {
        terms
            .iter()
            .zip(bits)
            .filter(|(_, b)| **b)
            .map(|(t, _)| vocab.get(&t.text).ln())
            .sum()
    };
    side(r_terms, v) - side(s_terms, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub text: String,
    pub relevance: f64,
}

/// Interchangeable phrases of equal token length; creatives of an adgroup
/// pick one member per site, so pairs differ by rewrites within a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub members: Vec<FamilyMember>,
}

impl Family {
    pub fn tokens(&self) -> usize {
        self.members.first().map(|m| tokenize(&m.text).len()).unwrap_or(0)
    }
}

/// Randomly generated families with relevances drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedFamilies {
    pub count: usize,
    pub members: usize,
    pub tokens: usize,
    pub relevance_min: f64,
    pub relevance_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExaminationSpec {
    /// `e[line][pos] = line_base[line] * exp(-rate * (pos - 1))`.
    Decay { line_base: Vec<f64>, rate: f64 },
    Uniform { value: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotExamination {
    pub top: f64,
    pub rhs: f64,
    pub unknown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub adgroups: usize,
    pub creatives_per_adgroup: usize,
    pub impressions_per_creative: u64,
    /// Base click scale; the click probability is at most
    /// `click_scale * slot examination`.
    pub click_scale: f64,
    pub lines: usize,
    pub line_length: usize,
    pub sites_per_adgroup: usize,
    pub filler_vocab: usize,
    pub default_relevance: f64,
    pub examination: ExaminationSpec,
    pub slot_examination: SlotExamination,
    pub rhs_fraction: f64,
    pub families: Vec<Family>,
    pub generated_families: Vec<GeneratedFamilies>,
}

fn member(text: &str, relevance: f64) -> FamilyMember {
    FamilyMember {
        text: text.into(),
        relevance,
    }
}

impl Default for SimConfig {
    /// Planted per-position examination decay and rewrite effects at the
    /// scale of the acceptance runs.
    fn default() -> Self {
        SimConfig {
            seed: 42,
            adgroups: 2000,
            creatives_per_adgroup: 4,
            impressions_per_creative: 10_000,
            click_scale: 0.9,
            lines: 3,
            line_length: 7,
            sites_per_adgroup: 4,
            filler_vocab: 500,
            default_relevance: 0.9,
            examination: ExaminationSpec::Decay {
                line_base: vec![0.95, 0.85, 0.7],
                rate: 0.3,
            },
            slot_examination: SlotExamination {
                top: 1.0,
                rhs: 0.7,
                unknown: 0.85,
            },
            rhs_fraction: 0.4,
            families: vec![
                Family {
                    members: vec![member("find cheap", 0.35), member("get discounts", 0.95)],
                },
                Family {
                    members: vec![member("flights", 0.55), member("flying", 0.9)],
                },
                Family {
                    members: vec![member("free shipping", 0.9), member("fast delivery", 0.7), member("order today", 0.4)],
                },
                Family {
                    members: vec![member("20% off", 0.95), member("great rates", 0.6)],
                },
            ],
            generated_families: vec![
                GeneratedFamilies {
                    count: 40,
                    members: 3,
                    tokens: 1,
                    relevance_min: 0.15,
                    relevance_max: 1.0,
                },
                GeneratedFamilies {
                    count: 12,
                    members: 2,
                    tokens: 2,
                    relevance_min: 0.15,
                    relevance_max: 1.0,
                },
            ],
        }
    }
}

/// Resolved generative parameters: the planted truth of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub click_scale: f64,
    pub vocab: VocabModel,
    pub examination: ExaminationModel,
    pub families: Vec<Family>,
}

impl GroundTruth {
    /// Log relevance of `term` minus the mean log relevance of its family.
    pub fn relative_log_relevance(&self, term: &str) -> Option<f64> {
        let fam = self.families.iter().find(|f| f.members.iter().any(|m| m.text == term))?;
        let mean = fam.members.iter().map(|m| m.relevance.ln()).sum::<f64>() / fam.members.len() as f64;
        Some(self.vocab.get(term).ln() - mean)
    }
}

pub struct SimOutput {
    pub groups: Vec<AdGroup>,
    pub truth: GroundTruth,
}

impl SimConfig {
    fn examination_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let (l, p) = (self.lines, self.line_length);
        match &self.examination {
            ExaminationSpec::Uniform { value } => Ok(vec![vec![*value; p]; l]),
            ExaminationSpec::Decay { line_base, rate } => {
                if line_base.len() < l {
                    return Err(Error::Config(format!("decay line_base has {} entries for {l} lines", line_base.len())));
                }
                Ok((0..l)
                    .map(|li| (0..p).map(|pi| line_base[li] * (-rate * pi as f64).exp()).collect())
                    .collect())
            }
            ExaminationSpec::Matrix { rows } => {
                if rows.len() < l || rows.iter().any(|r| r.len() < p) {
                    return Err(Error::Config(format!("examination matrix must cover {l} lines x {p} positions")));
                }
                Ok(rows.iter().take(l).map(|r| r[..p].to_vec()).collect())
            }
        }
    }

    /// Resolves vocabulary, families and examination, validating everything
    /// the simulation relies on.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        if self.lines == 0 || self.line_length == 0 {
            return Err(Error::Config("lines and line_length must be positive".into()));
        }
        if self.filler_vocab == 0 {
            return Err(Error::Config("filler_vocab must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rhs_fraction) {
            return Err(Error::Config(format!("rhs_fraction {} outside [0, 1]", self.rhs_fraction)));
        }
        let mut families = self.families.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0);
        for (gi, g) in self.generated_families.iter().enumerate() {
            if g.tokens == 0 || g.tokens > 3 || g.members < 2 {
                return Err(Error::Config(format!("generated family set {gi}: need 1-3 tokens and >= 2 members")));
            }
            if !(g.relevance_min > 0.0 && g.relevance_min <= g.relevance_max && g.relevance_max <= 1.0) {
                return Err(Error::Config(format!("generated family set {gi}: relevance range must lie in (0, 1]")));
            }
            for f in 0..g.count {
                let members = (0..g.members)
                    .map(|m| {
                        let text = (0..g.tokens)
                            .map(|t| {
                                let suffix = if g.tokens == 1 { String::new() } else { ((b'a' + t as u8) as char).to_string() };
                                format!("g{gi}f{f}m{m}{suffix}")
                            })
                            .collect::<Vec<_>>()
                            .join(" ");
                        let r = g.relevance_min + (g.relevance_max - g.relevance_min) * rng.random::<f64>();
                        FamilyMember { text, relevance: r }
                    })
                    .collect();
                families.push(Family { members });
            }
        }
        let mut vocab = VocabModel::new(self.default_relevance);
        for (i, f) in families.iter().enumerate() {
            if f.members.len() < 2 {
                return Err(Error::Config(format!("family {i} needs at least two members")));
            }
            let n = f.tokens();
            if n == 0 || n > 3 || n > self.line_length {
                return Err(Error::Config(format!("family {i}: phrases must have 1-3 tokens and fit a line")));
            }
            for m in &f.members {
                let toks = tokenize(&m.text);
                if toks.len() != n {
                    return Err(Error::Config(format!("family {i}: members must share a token count")));
                }
                vocab.relevance.insert(toks.join(" "), m.relevance);
            }
        }
        for f in &mut families {
            for m in &mut f.members {
                m.text = tokenize(&m.text).join(" ");
            }
        }
        vocab.validate()?;
        let slot = BTreeMap::from([
            (Slot::Top, self.slot_examination.top),
            (Slot::Rhs, self.slot_examination.rhs),
            (Slot::Unknown, self.slot_examination.unknown),
        ]);
        let examination = ExaminationModel {
            matrix: self.examination_matrix()?,
            slot,
        };
        examination.validate()?;
        let max_slot = examination.slot.values().copied().fold(0.0, f64::max);
        if self.click_scale.is_nan() || self.click_scale < 0.0 || self.click_scale * max_slot > 1.0 {
            return Err(Error::Config(format!(
                "click_scale (kappa) = {} allows click probability {} > 1",
                self.click_scale,
                self.click_scale * max_slot
            )));
        }
        if self.adgroups > 0 && families.is_empty() && self.sites_per_adgroup > 0 {
            return Err(Error::Config("sites requested but no families configured".into()));
        }
        Ok(GroundTruth {
            click_scale: self.click_scale,
            vocab,
            examination,
            families,
        })
    }
}

/// A term of the generative snippet with its resolved parameters.
#[derive(Debug, Clone, Copy)]
struct Unit {
    examine: f64,
    relevance: f64,
}

/// Snippet terms resolved against the examination and vocabulary models.
/// Sampling is the same draw sequence as [`examine_terms`] followed by
/// [`snippet_relevance`].
pub struct PreparedSnippet {
    units: Vec<Unit>,
}

impl PreparedSnippet {
    pub fn new(terms: &[PositionedTerm], exam: &ExaminationModel, vocab: &VocabModel) -> Result<Self> {
        let units = terms
            .iter()
            .map(|t| {
                Ok(Unit {
                    examine: exam.prob(t.line, t.pos)?,
                    relevance: vocab.get(&t.text),
                })
            })
            .collect::<Result<_>>()?;
        Ok(PreparedSnippet { units })
    }

    pub fn sample_relevance(&self, rng: &mut impl RngCore) -> f64 {
        let mut rel = 1.0;
        for u in &self.units {
            if rng.random::<f64>() < u.examine {
                rel *= u.relevance;
            }
        }
        rel
    }

    /// Closed-form click-free relevance expectation, for diagnostics.
    pub fn expected_relevance(&self) -> f64 {
        self.units
            .iter()
            .map(|u| 1.0 - u.examine * (1.0 - u.relevance))
            .product()
    }
}

struct Site {
    family: usize,
    line: usize,
    pos: usize,
    len: usize,
}

fn place_sites(cfg: &SimConfig, truth: &GroundTruth, rng: &mut ChaCha8Rng) -> Vec<Site> {
    let mut sites: Vec<Site> = Vec::new();
    for _ in 0..cfg.sites_per_adgroup {
        for _attempt in 0..100 {
            let family = rng.random_range(0..truth.families.len());
            let len = truth.families[family].tokens();
            let line = rng.random_range(1..=cfg.lines);
            let pos = rng.random_range(1..=cfg.line_length - len + 1);
            // keep at least one filler token between sites
            let clash = sites
                .iter()
                .any(|s| s.line == line && pos <= s.pos + s.len && s.pos <= pos + len);
            if !clash {
                sites.push(Site { family, line, pos, len });
                break;
            }
        }
    }
    sites.sort_by_key(|s| (s.line, s.pos));
    sites
}

fn simulate_adgroup(cfg: &SimConfig, truth: &GroundTruth, index: usize) -> Result<AdGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);

    let slot = if rng.random::<f64>() < cfg.rhs_fraction { Slot::Rhs } else { Slot::Top };
    let template: Vec<Vec<String>> = (0..cfg.lines)
        .map(|_| {
            (0..cfg.line_length)
                .map(|_| format!("w{}", rng.random_range(0..cfg.filler_vocab)))
                .collect()
        })
        .collect();
    let sites = place_sites(cfg, truth, &mut rng);

    let combos: usize = sites
        .iter()
        .map(|s| truth.families[s.family].members.len())
        .try_fold(1usize, |acc, m| acc.checked_mul(m))
        .unwrap_or(usize::MAX);
    let mut seen = HashSet::new();
    let mut choices: Vec<Vec<usize>> = Vec::new();
    for _ in 0..cfg.creatives_per_adgroup {
        let mut pick = Vec::new();
        for _attempt in 0..50 {
            pick = sites
                .iter()
                .map(|s| rng.random_range(0..truth.families[s.family].members.len()))
                .collect();
            if !seen.contains(&pick) || seen.len() >= combos {
                break;
            }
        }
        seen.insert(pick.clone());
        choices.push(pick);
    }

    let slot_p = truth.examination.slot_prob(slot);
    let mut creatives = Vec::with_capacity(choices.len());
    for (ci, pick) in choices.iter().enumerate() {
        let mut terms = Vec::new();
        let mut lines = Vec::with_capacity(cfg.lines);
        for (li, row) in template.iter().enumerate() {
            let mut tokens: Vec<String> = Vec::new();
            let mut pos = 1;
            while pos <= cfg.line_length {
                if let Some((si, s)) = sites.iter().enumerate().find(|(_, s)| s.line == li + 1 && s.pos == pos) {
                    let text = &truth.families[s.family].members[pick[si]].text;
                    terms.push(PositionedTerm::new(text.as_str(), li + 1, pos));
                    tokens.extend(text.split(' ').map(str::to_owned));
                    pos += s.len;
                } else {
                    let tok = &row[pos - 1];
                    terms.push(PositionedTerm::new(tok.as_str(), li + 1, pos));
                    tokens.push(tok.clone());
                    pos += 1;
                }
            }
            lines.push(tokens.join(" "));
        }
        let snippet = PreparedSnippet::new(&terms, &truth.examination, &truth.vocab)?;
        let mut clicks = 0u64;
        for _ in 0..cfg.impressions_per_creative {
            let p = truth.click_scale * slot_p * snippet.sample_relevance(&mut rng);
            if rng.random::<f64>() < p {
                clicks += 1;
            }
        }
        creatives.push(Creative {
            creative_id: format!("c{ci}"),
            slot,
            lines,
            impressions: cfg.impressions_per_creative,
            clicks,
        });
    }
    Ok(AdGroup {
        adgroup_id: format!("ag{index:05}"),
        keyword: format!("kw{index}"),
        creatives,
    })
}

/// Generates the corpus and its planted truth. Each adgroup draws from its
/// own stream of the seeded generator, so the output does not depend on how
/// adgroups are scheduled.
pub fn simulate_corpus(cfg: &SimConfig) -> Result<SimOutput> {
    let truth = cfg.ground_truth()?;
    let groups = (0..cfg.adgroups)
        .into_par_iter()
        .map(|i| simulate_adgroup(cfg, &truth, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimOutput { groups, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(texts: &[&str]) -> Vec<PositionedTerm> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| PositionedTerm::new(*t, 1, i + 1))
            .collect()
    }

    fn small_config() -> SimConfig {
        SimConfig {
            adgroups: 6,
            impressions_per_creative: 500,
            generated_families: vec![GeneratedFamilies {
                count: 5,
                members: 2,
                tokens: 1,
                relevance_min: 0.2,
                relevance_max: 1.0,
            }],
            ..SimConfig::default()
        }
    }

    #[test]
    fn degenerate_examination() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = terms(&["a", "b", "c"]);
        let ones = ExaminationModel::uniform(1, 3, 1.0);
        assert_eq!(examine_terms(&t, &ones, &mut rng).unwrap(), [true; 3]);
        let zeros = ExaminationModel::uniform(1, 3, 0.0);
        assert_eq!(examine_terms(&t, &zeros, &mut rng).unwrap(), [false; 3]);
    }

    #[test]
    fn examination_rate_matches_planted() {
        let mut exam = ExaminationModel::uniform(2, 2, 1.0);
        exam.matrix[1][0] = 0.5;
        let t = vec![PositionedTerm::new("x", 2, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hits = (0..10_000)
            .filter(|_| examine_terms(&t, &exam, &mut rng).unwrap()[0])
            .count();
        let mean = hits as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&mean), "{mean}");
    }

    #[test]
    fn out_of_bounds_coordinate() {
        let exam = ExaminationModel::uniform(1, 2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = examine_terms(&[PositionedTerm::new("x", 1, 3)], &exam, &mut rng).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { line: 1, pos: 3 }));
        assert!(exam.prob(0, 1).is_err());
    }

    #[test]
    fn relevance_products() {
        let vocab = VocabModel::new(0.9).with("a", 0.5).with("b", 0.8);
        let t = terms(&["a", "b"]);
        assert_eq!(snippet_relevance(&t, &[false, false], &vocab), 1.0);
        assert_eq!(snippet_relevance(&t, &[true, false], &vocab), 0.5);
        assert!((snippet_relevance(&t, &[true, true], &vocab) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn oracle_score_examples() {
        let vocab = VocabModel::new(0.9).with("a", 0.5).with("b", 0.8);
        let r = terms(&["a"]);
        let s = terms(&["b"]);
        let score = oracle_score(&r, &[true], &s, &[true], &vocab);
        assert!((score - (0.5f64.ln() - 0.8f64.ln())).abs() < 1e-15);
        assert!((score + 0.470).abs() < 1e-3);
        assert_eq!(oracle_score(&r, &[true], &r, &[true], &vocab), 0.0);
        assert_eq!(oracle_score(&s, &[true], &r, &[true], &vocab), -score);
    }

    #[test]
    fn prepared_snippet_follows_the_same_draws() {
        let vocab = VocabModel::new(0.9).with("a", 0.3);
        let mut exam = ExaminationModel::uniform(1, 3, 0.6);
        exam.matrix[0][2] = 0.1;
        let t = terms(&["a", "b", "c"]);
        let prepared = PreparedSnippet::new(&t, &exam, &vocab).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let v = examine_terms(&t, &exam, &mut r1).unwrap();
            assert_eq!(snippet_relevance(&t, &v, &vocab), prepared.sample_relevance(&mut r2));
        }
    }

    #[test]
    fn planted_click_rate() {
        let cfg = SimConfig {
            adgroups: 1,
            creatives_per_adgroup: 1,
            impressions_per_creative: 10_000,
            click_scale: 0.3,
            default_relevance: 1.0,
            examination: ExaminationSpec::Uniform { value: 1.0 },
            slot_examination: SlotExamination { top: 1.0, rhs: 1.0, unknown: 1.0 },
            families: vec![Family {
                members: vec![member("x", 1.0), member("y", 1.0)],
            }],
            generated_families: vec![],
            ..SimConfig::default()
        };
        let out = simulate_corpus(&cfg).unwrap();
        let c = &out.groups[0].creatives[0];
        let ctr = c.clicks as f64 / c.impressions as f64;
        assert!((0.285..=0.315).contains(&ctr), "{ctr}");
    }

    #[test]
    fn zero_click_scale_gives_no_clicks() {
        let cfg = SimConfig {
            click_scale: 0.0,
            ..small_config()
        };
        let out = simulate_corpus(&cfg).unwrap();
        assert!(out.groups.iter().flat_map(|g| &g.creatives).all(|c| c.clicks == 0));
    }

    #[test]
    fn click_scale_too_large() {
        let cfg = SimConfig {
            click_scale: 1.5,
            ..small_config()
        };
        let err = simulate_corpus(&cfg).err().unwrap().to_string();
        assert!(err.contains("kappa"), "{err}");
    }

    #[test]
    fn lower_relevance_phrase_gets_fewer_clicks() {
        let cfg = SimConfig {
            adgroups: 1,
            creatives_per_adgroup: 2,
            impressions_per_creative: 50_000,
            sites_per_adgroup: 1,
            families: vec![Family {
                members: vec![member("great deal", 0.5), member("best price", 0.8)],
            }],
            generated_families: vec![],
            ..SimConfig::default()
        };
        let out = simulate_corpus(&cfg).unwrap();
        let g = &out.groups[0];
        assert_ne!(g.creatives[0].lines, g.creatives[1].lines);
        let (lo, hi) = if g.creatives[0].lines.iter().any(|l| l.contains("great deal")) {
            (&g.creatives[0], &g.creatives[1])
        } else {
            (&g.creatives[1], &g.creatives[0])
        };
        assert!(lo.clicks < hi.clicks, "{} vs {}", lo.clicks, hi.clicks);
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = simulate_corpus(&small_config()).unwrap();
        let b = simulate_corpus(&small_config()).unwrap();
        assert_eq!(a.groups, b.groups);
        assert_eq!(a.truth, b.truth);
        let c = simulate_corpus(&SimConfig { seed: 43, ..small_config() }).unwrap();
        assert_ne!(a.groups, c.groups);
    }

    #[test]
    fn generated_corpus_is_valid() {
        let out = simulate_corpus(&small_config()).unwrap();
        assert_eq!(out.groups.len(), 6);
        for (i, g) in out.groups.iter().enumerate() {
            g.validate(i + 1).unwrap();
            assert_eq!(g.creatives.len(), 4);
            for c in &g.creatives {
                assert_eq!(c.lines.len(), 3);
                assert!(c.lines.iter().all(|l| tokenize(l).len() == 7));
            }
        }
    }

    #[test]
    fn relative_log_relevance_is_centered() {
        let truth = small_config().ground_truth().unwrap();
        let f = &truth.families[0];
        let total: f64 = f
            .members
            .iter()
            .map(|m| truth.relative_log_relevance(&m.text).unwrap())
            .sum();
        assert!(total.abs() < 1e-12);
        assert!(truth.relative_log_relevance("w1").is_none());
    }
}
