//! Tokenization, positioned n-grams, and per-line phrase diffs between two
//! creatives.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Creative;

pub const MAX_NGRAM: usize = 3;

/// An n-gram anchored at `(line, pos)`, both 1-based; `pos` is the token
/// index of its first token within the line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PositionedTerm {
    pub line: usize,
    pub pos: usize,
    pub n: usize,
    pub text: String,
}

impl PositionedTerm {
    pub fn new(text: impl Into<String>, line: usize, pos: usize) -> Self {
        let text = text.into();
        let n = text.split(' ').count();
        PositionedTerm { line, pos, n, text }
    }

    /// Last token index covered, inclusive.
    pub fn end(&self) -> usize {
        self.pos + self.n - 1
    }

    pub fn overlaps(&self, other: &PositionedTerm) -> bool {
        self.line == other.line && self.pos <= other.end() && other.pos <= self.end()
    }
}

/// Lowercases, removes punctuation (digits and `%` survive), splits on
/// whitespace.
pub fn tokenize(line: &str) -> Vec<String> {
    let cleaned: String = line
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '%' || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn ngrams_of_line(tokens: &[String], line: usize, out: &mut Vec<PositionedTerm>) {
    for start in 0..tokens.len() {
        for n in 1..=MAX_NGRAM.min(tokens.len() - start) {
            out.push(PositionedTerm {
                line,
                pos: start + 1,
                n,
                text: tokens[start..start + n].join(" "),
            });
        }
    }
}

/// All 1-, 2- and 3-grams of every line, ordered by line, position, then n.
pub fn extract_ngrams(creative: &Creative) -> Vec<PositionedTerm> {
    let mut out = Vec::new();
    for (i, line) in creative.lines.iter().enumerate() {
        ngrams_of_line(&tokenize(line), i + 1, &mut out);
    }
    out
}

/// A maximal run of unaligned tokens on one side of a line diff.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub pos: usize,
    pub tokens: Vec<String>,
}

impl Span {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Phrases present in one creative of a pair but not the other.
///
/// `only_left`/`only_right` hold every 1–3-gram lying inside an unaligned
/// span, minus any phrase text occurring on both sides. The raw spans are
/// kept for the single-rewrite bootstrap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermDiff {
    pub only_left: Vec<PositionedTerm>,
    pub only_right: Vec<PositionedTerm>,
    pub spans_left: Vec<Span>,
    pub spans_right: Vec<Span>,
}

impl TermDiff {
    pub fn is_empty(&self) -> bool {
        self.only_left.is_empty() && self.only_right.is_empty()
    }

    pub fn swapped(&self) -> TermDiff {
        TermDiff {
            only_left: self.only_right.clone(),
            only_right: self.only_left.clone(),
            spans_left: self.spans_right.clone(),
            spans_right: self.spans_left.clone(),
        }
    }

    /// The single rewritten phrase pair, if each side has exactly one
    /// differing span of at most three tokens.
    pub fn single_rewrite(&self) -> Option<(&Span, &Span)> {
        match (self.spans_left.as_slice(), self.spans_right.as_slice()) {
            ([l], [r]) if l.tokens.len() <= MAX_NGRAM && r.tokens.len() <= MAX_NGRAM => Some((l, r)),
            _ => None,
        }
    }
}

/// LCS alignment flags: `true` where a token is part of the common subsequence.
fn lcs_matched(a: &[String], b: &[String]) -> (Vec<bool>, Vec<bool>) {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    let mut ma = vec![false; n];
    let mut mb = vec![false; m];
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            ma[i - 1] = true;
            mb[j - 1] = true;
            i -= 1;
            j -= 1;
        } else if dp[i - 1][j] >= dp[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    (ma, mb)
}

fn spans(tokens: &[String], matched: &[bool], line: usize) -> Vec<Span> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if matched[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && !matched[i] {
            i += 1;
        }
        out.push(Span {
            line,
            pos: start + 1,
            tokens: tokens[start..i].to_vec(),
        });
    }
    out
}

fn span_phrases(spans: &[Span], out: &mut Vec<PositionedTerm>) {
    for s in spans {
        let mut terms = Vec::new();
        ngrams_of_line(&s.tokens, s.line, &mut terms);
        out.extend(terms.into_iter().map(|mut t| {
            t.pos += s.pos - 1;
            t
        }));
    }
}

/// Per-line LCS diff. Lines are paired by index; a missing line diffs
/// against an empty one. The alignment is computed in a canonical argument
/// order so that swapping the creatives swaps the result exactly.
pub fn diff_phrases(left: &Creative, right: &Creative) -> TermDiff {
    let mut diff = TermDiff::default();
    let nlines = left.lines.len().max(right.lines.len());
    for li in 0..nlines {
        let a = left.lines.get(li).map(|l| tokenize(l)).unwrap_or_default();
        let b = right.lines.get(li).map(|l| tokenize(l)).unwrap_or_default();
        if a == b {
            continue;
        }
        let (ma, mb) = if a <= b {
            lcs_matched(&a, &b)
        } else {
            let (mb, ma) = lcs_matched(&b, &a);
            (ma, mb)
        };
        diff.spans_left.extend(spans(&a, &ma, li + 1));
        diff.spans_right.extend(spans(&b, &mb, li + 1));
    }
    let mut left_terms = Vec::new();
    let mut right_terms = Vec::new();
    span_phrases(&diff.spans_left, &mut left_terms);
    span_phrases(&diff.spans_right, &mut right_terms);
    let lt: HashSet<&str> = left_terms.iter().map(|t| t.text.as_str()).collect();
    let rt: HashSet<&str> = right_terms.iter().map(|t| t.text.as_str()).collect();
    let shared: HashSet<String> = lt.intersection(&rt).map(|s| s.to_string()).collect();
    left_terms.retain(|t| !shared.contains(&t.text));
    right_terms.retain(|t| !shared.contains(&t.text));
    left_terms.sort();
    right_terms.sort();
    diff.only_left = left_terms;
    diff.only_right = right_terms;
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Slot;
    use proptest::prelude::*;

    fn creative(lines: &[&str]) -> Creative {
        Creative {
            creative_id: "c".into(),
            slot: Slot::Top,
            lines: lines.iter().map(|s| s.to_string()).collect(),
            impressions: 0,
            clicks: 0,
        }
    }

    fn snippet1() -> Creative {
        creative(&[
            "XYZ Airlines",
            "Find cheap flights to New York.",
            "No reservation costs. Great rates",
        ])
    }

    fn snippet2() -> Creative {
        creative(&[
            "XYZ Airlines",
            "Flying to New York? Get discounts.",
            "No reservation costs. Great rates!",
        ])
    }

    fn has(terms: &[PositionedTerm], text: &str, line: usize, pos: usize) -> bool {
        terms.iter().any(|t| t.text == text && t.line == line && t.pos == pos)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Find cheap flights to New York."),
            ["find", "cheap", "flights", "to", "new", "york"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("XYZ Airlines"), ["xyz", "airlines"]);
        assert_eq!(tokenize("Save 20% off -- today!"), ["save", "20%", "off", "today"]);
    }

    #[test]
    fn ngram_coordinates() {
        let c = creative(&["XYZ Airlines", "Find cheap flights to New York."]);
        let terms = extract_ngrams(&c);
        assert!(terms
            .iter()
            .any(|t| t.text == "find cheap" && t.n == 2 && t.line == 2 && t.pos == 1));
        assert_eq!(extract_ngrams(&creative(&["hello"])).len(), 1);
        assert_eq!(extract_ngrams(&creative(&["a b c"])).len(), 6);
        let mut sorted = terms.clone();
        sorted.sort();
        assert_eq!(sorted, terms);
    }

    #[test]
    fn ngram_counts_by_line_length() {
        for k in 1..12usize {
            let line: Vec<String> = (0..k).map(|i| format!("t{i}")).collect();
            let got = extract_ngrams(&creative(&[&line.join(" ")])).len();
            let want = match k {
                1 => 1,
                2 => 3,
                _ => 3 * k - 3,
            };
            assert_eq!(got, want, "k = {k}");
        }
    }

    #[test]
    fn airline_example_diff() {
        let d = diff_phrases(&snippet1(), &snippet2());
        assert!(has(&d.only_left, "find cheap", 2, 1));
        assert!(has(&d.only_left, "flights", 2, 3));
        assert!(has(&d.only_right, "flying", 2, 1));
        assert!(has(&d.only_right, "get discounts", 2, 5));
        // lines 1 and 3 tokenize identically
        assert!(d.only_left.iter().chain(&d.only_right).all(|t| t.line == 2));
    }

    #[test]
    fn identical_creatives_have_empty_diff() {
        let d = diff_phrases(&snippet1(), &snippet1());
        assert!(d.is_empty());
        assert!(d.spans_left.is_empty() && d.spans_right.is_empty());
    }

    #[test]
    fn single_substitution() {
        let d = diff_phrases(&creative(&["a b c"]), &creative(&["a x c"]));
        assert_eq!(d.only_left, vec![PositionedTerm::new("b", 1, 2)]);
        assert_eq!(d.only_right, vec![PositionedTerm::new("x", 1, 2)]);
        let (l, r) = d.single_rewrite().unwrap();
        assert_eq!((l.text(), r.text()), ("b".to_string(), "x".to_string()));
    }

    #[test]
    fn moved_token_is_not_a_difference() {
        let d = diff_phrases(&creative(&["a b"]), &creative(&["b a"]));
        assert!(d.only_left.is_empty() && d.only_right.is_empty());
    }

    #[test]
    fn missing_line_diffs_against_empty() {
        let d = diff_phrases(&creative(&["a", "b c"]), &creative(&["a"]));
        assert_eq!(d.only_left.len(), 3);
        assert!(d.only_right.is_empty());
        assert!(d.single_rewrite().is_none());
    }

    fn arb_creative() -> impl Strategy<Value = Creative> {
        let token = prop::sample::select(vec!["a", "b", "c", "d", "e"]);
        let line = prop::collection::vec(token, 1..7).prop_map(|t| t.join(" "));
        prop::collection::vec(line, 1..4).prop_map(|lines| Creative {
            creative_id: "p".into(),
            slot: Slot::Unknown,
            lines,
            impressions: 0,
            clicks: 0,
        })
    }

    proptest! {
        #[test]
        fn diff_with_self_is_empty(c in arb_creative()) {
            prop_assert!(diff_phrases(&c, &c).is_empty());
        }

        #[test]
        fn diff_swap_symmetry(l in arb_creative(), r in arb_creative()) {
            let d = diff_phrases(&l, &r);
            let s = diff_phrases(&r, &l);
            prop_assert_eq!(&d.only_left, &s.only_right);
            prop_assert_eq!(&d.only_right, &s.only_left);
        }

        #[test]
        fn diff_phrases_are_ngrams_of_their_creative(l in arb_creative(), r in arb_creative()) {
            let d = diff_phrases(&l, &r);
            let lg: HashSet<PositionedTerm> = extract_ngrams(&l).into_iter().collect();
            let rg: HashSet<PositionedTerm> = extract_ngrams(&r).into_iter().collect();
            prop_assert!(d.only_left.iter().all(|t| lg.contains(t)));
            prop_assert!(d.only_right.iter().all(|t| rg.contains(t)));
            let lt: HashSet<&str> = d.only_left.iter().map(|t| t.text.as_str()).collect();
            prop_assert!(d.only_right.iter().all(|t| !lt.contains(t.text.as_str())));
        }
    }
}
