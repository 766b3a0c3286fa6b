//! Detection and recognition scoring: greedy one-to-one box matching at an
//! IOU threshold, box-level F1, and the document Edit Score.
//!
//! The Edit Score charges Levenshtein distance on matched words and the
//! full string length for every missed or spurious word, then normalizes
//! by the text length and subtracts from one.

mod report;
mod sroie;

pub use report::{read_report, write_report, Aggregate, DocumentScore, EvalReport, ReportError, REPORT_VERSION};
pub use sroie::{parse_sroie_gt, SroieError};

use serde::{Deserialize, Serialize};

use crate::raster::{iou, Rect};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Anything with a transcription and a box.
pub trait Word {
    fn text(&self) -> &str;
    fn rect(&self) -> Rect;
}

/// Plain ground-truth word, e.g. parsed from a receipt annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtWord {
    pub text: String,
    #[serde(rename = "box")]
    pub rect: Rect,
}

impl Word for GtWord {
    fn text(&self) -> &str {
        &self.text
    }
    fn rect(&self) -> Rect {
        self.rect
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb {
                diag
            } else {
                1 + diag.min(up).min(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    /// False positives.
    pub unmatched_pred: Vec<usize>,
    /// False negatives.
    pub unmatched_gt: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }
    pub fn fp(&self) -> usize {
        self.unmatched_pred.len()
    }
    pub fn fn_(&self) -> usize {
        self.unmatched_gt.len()
    }
}

/// Greedy one-to-one matching in descending IOU order.
///
/// Ties go to the lower gt index, then the lower pred index. Pairs below
/// `iou_threshold` are never accepted.
pub fn match_boxes(pred: &[Rect], gt: &[Rect], iou_threshold: f64) -> MatchResult {
    let mut cands = Vec::new();
    for (g, gb) in gt.iter().enumerate() {
        for (p, pb) in pred.iter().enumerate() {
            let v = iou(pb, gb);
            if v > 0.0 && v >= iou_threshold {
                cands.push((v, g, p));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (v, g, p) in cands {
        if pred_used[p] || gt_used[g] {
            continue;
        }
        pred_used[p] = true;
        gt_used[g] = true;
        pairs.push(MatchPair { pred: p, gt: g, iou: v });
    }
    let unused = |used: &[bool]| used.iter().enumerate().filter(|(_, &u)| !u).map(|(i, _)| i).collect();
    MatchResult {
        unmatched_pred: unused(&pred_used),
        unmatched_gt: unused(&gt_used),
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 from raw counts; every 0/0 is taken as 0.
pub fn prf_from_counts(tp: usize, fp: usize, fn_: usize) -> Prf {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

pub fn detection_f1(m: &MatchResult) -> Prf {
    prf_from_counts(m.tp(), m.fp(), m.fn_())
}

/// What the summed edit distance is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsDenominator {
    GtOnly,
    #[default]
    GtPlusFp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub case_insensitive: bool,
    pub denominator: EsDenominator,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            case_insensitive: true,
            denominator: EsDenominator::GtPlusFp,
        }
    }
}

fn norm(s: &str, case_insensitive: bool) -> String {
    if case_insensitive {
        s.to_lowercase()
    } else {
        s.to_string()
    }
}

/// Document Edit Score in `[0, 1]`.
pub fn edit_score<P: Word, G: Word>(m: &MatchResult, pred: &[P], gt: &[G], opts: &EvalOptions) -> f64 {
    let len = |s: &str| norm(s, opts.case_insensitive).chars().count();
    let mut distance = 0usize;
    for pair in &m.pairs {
        distance += levenshtein(
            &norm(pred[pair.pred].text(), opts.case_insensitive),
            &norm(gt[pair.gt].text(), opts.case_insensitive),
        );
    }
    let fn_len: usize = m.unmatched_gt.iter().map(|&g| len(gt[g].text())).sum();
    let fp_len: usize = m.unmatched_pred.iter().map(|&p| len(pred[p].text())).sum();
    distance += fn_len + fp_len;
    let gt_len: usize = gt.iter().map(|w| len(w.text())).sum();
    let denom = match opts.denominator {
        EsDenominator::GtOnly => gt_len,
        EsDenominator::GtPlusFp => gt_len + fp_len,
    };
    if denom == 0 {
        return if distance == 0 { 1.0 } else { 0.0 };
    }
    (1.0 - distance as f64 / denom as f64).clamp(0.0, 1.0)
}

/// Matches and scores one document.
pub fn evaluate_document<P: Word, G: Word>(name: &str, pred: &[P], gt: &[G], opts: &EvalOptions) -> DocumentScore {
    let pr: Vec<Rect> = pred.iter().map(Word::rect).collect();
    let gr: Vec<Rect> = gt.iter().map(Word::rect).collect();
    let m = match_boxes(&pr, &gr, opts.iou_threshold);
    let prf = detection_f1(&m);
    DocumentScore {
        name: name.to_string(),
        tp: m.tp(),
        fp: m.fp(),
        fn_: m.fn_(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        edit_score: edit_score(&m, pred, gt, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(x0: i32, y0: i32, x1: i32, y1: i32) -> Rect {
        Rect::new(x0, y0, x1, y1).unwrap()
    }

    fn gw(text: &str, r: Rect) -> GtWord {
        GtWord { text: text.into(), rect: r }
    }

    /// Exhaustive recursion straight from the definition.
    fn lev_oracle(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ha, ta)), Some((hb, tb))) => {
                let sub = lev_oracle(ta, tb) + usize::from(ha != hb);
                sub.min(lev_oracle(ta, b) + 1).min(lev_oracle(a, tb) + 1)
            }
        }
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("same", "same"), 0);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        let (a, b): (Vec<char>, Vec<char>) = ("kitten".chars().collect(), "sitting".chars().collect());
        assert_eq!(lev_oracle(&a, &b), 3);
    }

    #[test]
    fn match_examples() {
        let boxes = vec![rect(0, 0, 10, 10), rect(20, 0, 30, 10)];
        let m = match_boxes(&boxes, &boxes, 0.5);
        assert_eq!(m.tp(), 2);
        assert!(m.unmatched_pred.is_empty() && m.unmatched_gt.is_empty());

        let m = match_boxes(&[], &boxes, 0.5);
        assert_eq!(m.unmatched_gt, vec![0, 1]);
    }

    /// Best total IOU over all injective assignments above threshold.
    fn optimal_pairs(pred: &[Rect], gt: &[Rect], thr: f64) -> (usize, f64) {
        fn rec(p: usize, pred: &[Rect], gt: &[Rect], used: &mut Vec<bool>, thr: f64) -> (usize, f64) {
            if p == pred.len() {
                return (0, 0.0);
            }
            let mut best = rec(p + 1, pred, gt, used, thr);
            for g in 0..gt.len() {
                let v = iou(&pred[p], &gt[g]);
                if !used[g] && v > 0.0 && v >= thr {
                    used[g] = true;
                    let (n, s) = rec(p + 1, pred, gt, used, thr);
                    used[g] = false;
                    if (n + 1, s + v) > best {
                        best = (n + 1, s + v);
                    }
                }
            }
            best
        }
        rec(0, pred, gt, &mut vec![false; gt.len()], thr)
    }

    #[test]
    fn one_pred_two_gts_prefers_higher_iou() {
        // pred 0..10; gt A overlaps 0..6 of width 10 (iou 0.6); gt B chosen for iou 0.55
        let pred = vec![rect(0, 0, 100, 10)];
        let gt_a = rect(0, 0, 60, 10);
        let gt_b = rect(45, 0, 100, 10);
        assert!((iou(&pred[0], &gt_a) - 0.6).abs() < 1e-12);
        assert!((iou(&pred[0], &gt_b) - 0.55).abs() < 1e-12);
        let gt = vec![gt_b, gt_a];
        let m = match_boxes(&pred, &gt, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].gt, 1);
        assert_eq!(m.unmatched_gt, vec![0]);
        assert_eq!(optimal_pairs(&pred, &gt, 0.5).0, 1);
    }

    #[test]
    fn f1_examples() {
        let all = match_boxes(&[rect(0, 0, 2, 2)], &[rect(0, 0, 2, 2)], 0.5);
        assert_eq!(detection_f1(&all), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        let none = match_boxes(&[], &[rect(0, 0, 2, 2)], 0.5);
        assert_eq!(detection_f1(&none), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        let p = prf_from_counts(2, 1, 1);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn edit_score_examples() {
        let opts = EvalOptions::default();
        let r = rect(0, 0, 30, 10);
        let gt = vec![gw("abc", r)];
        let m = match_boxes(&[r], &[r], 0.5);
        assert_eq!(edit_score(&m, &[gw("ABC", r)], &gt, &opts), 1.0);
        let es = edit_score(&m, &[gw("abd", r)], &gt, &opts);
        assert!((es - 2.0 / 3.0).abs() < 1e-12);
        let gt = vec![gw("hello", r)];
        let m = match_boxes(&[], &[r], 0.5);
        assert_eq!(edit_score::<GtWord, _>(&m, &[], &gt, &opts), 0.0);
        let empty = MatchResult::default();
        assert_eq!(edit_score::<GtWord, GtWord>(&empty, &[], &[], &opts), 1.0);
    }

    #[test]
    fn fp_denominator_modes() {
        let r = rect(0, 0, 30, 10);
        let far = rect(100, 100, 120, 110);
        let gt = vec![gw("abcd", r)];
        let pred = vec![gw("abcd", r), gw("xy", far)];
        let m = match_boxes(&[r, far], &[r], 0.5);
        let plus = edit_score(&m, &pred, &gt, &EvalOptions::default());
        assert!((plus - (1.0 - 2.0 / 6.0)).abs() < 1e-12);
        let only = EvalOptions { denominator: EsDenominator::GtOnly, ..Default::default() };
        assert!((edit_score(&m, &pred, &gt, &only) - 0.5).abs() < 1e-12);
    }

    fn small_str() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![Just('a'), Just('b'), Just('c')], 0..7)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn levenshtein_is_a_metric(a in small_str(), b in small_str(), c in small_str()) {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn matching_is_one_to_one(raw_p in proptest::collection::vec((0i32..40, 0i32..40, 1i32..20, 1i32..20), 0..5),
                                  raw_g in proptest::collection::vec((0i32..40, 0i32..40, 1i32..20, 1i32..20), 0..5)) {
            let mk = |v: &Vec<(i32, i32, i32, i32)>| v.iter().map(|&(x, y, w, h)| rect(x, y, x + w, y + h)).collect::<Vec<_>>();
            let (pred, gt) = (mk(&raw_p), mk(&raw_g));
            let m = match_boxes(&pred, &gt, 0.5);
            let mut ps: Vec<_> = m.pairs.iter().map(|p| p.pred).chain(m.unmatched_pred.iter().copied()).collect();
            let mut gs: Vec<_> = m.pairs.iter().map(|p| p.gt).chain(m.unmatched_gt.iter().copied()).collect();
            ps.sort();
            gs.sort();
            prop_assert_eq!(ps, (0..pred.len()).collect::<Vec<_>>());
            prop_assert_eq!(gs, (0..gt.len()).collect::<Vec<_>>());
            prop_assert!(m.pairs.iter().all(|p| p.iou >= 0.5));
            // greedy gives a maximal matching, hence at least half the optimum
            prop_assert!(2 * m.tp() >= optimal_pairs(&pred, &gt, 0.5).0);
            let prf = detection_f1(&m);
            prop_assert!(prf.f1 <= prf.precision.max(prf.recall) + 1e-12);
            prop_assert_eq!(prf.f1 == 1.0, m.fp() == 0 && m.fn_() == 0 && m.tp() > 0);
        }

        #[test]
        fn edit_score_bounds_and_case(texts in proptest::collection::vec("[a-zA-Z]{1,6}", 1..5),
                                      corrupt in proptest::collection::vec(any::<bool>(), 5)) {
            let gt: Vec<GtWord> = texts.iter().enumerate().map(|(i, t)| gw(t, rect(i as i32 * 50, 0, i as i32 * 50 + 40, 10))).collect();
            let boxes: Vec<Rect> = gt.iter().map(|w| w.rect).collect();
            let m = match_boxes(&boxes, &boxes, 0.5);
            let opts = EvalOptions::default();
            let mut pred = gt.clone();
            let mut prev = edit_score(&m, &pred, &gt, &opts);
            prop_assert_eq!(prev, 1.0);
            for (i, flip) in corrupt.iter().enumerate().take(pred.len()) {
                if *flip {
                    pred[i].text.push('#');
                    let es = edit_score(&m, &pred, &gt, &opts);
                    prop_assert!((0.0..=1.0).contains(&es));
                    prop_assert!(es <= prev);
                    prev = es;
                }
            }
            let upper: Vec<GtWord> = pred.iter().map(|w| gw(&w.text.to_uppercase(), w.rect)).collect();
            prop_assert_eq!(edit_score(&m, &upper, &gt, &opts), prev);
        }
    }
}
