//! Span-level precision, recall and F1 with delimiter handling, per-name
//! macro averaging, and the delimiter-split baseline.

use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{is_delimiter, Corpus, GroundTruthSet, Span};
use crate::error::{Error, Result};
use crate::segmenter::Segmentation;

/// Span after delimiter stripping; always contains an alphanumeric.
pub type EvalSpan = Span;

/// Drop all-delimiter spans and trim delimiters off both ends of the rest.
/// Ground truth and predictions both go through here.
pub fn canonicalize_spans(spans: &[Span], name: &[char]) -> Vec<EvalSpan> {
    spans
        .iter()
        .filter_map(|s| {
            let start = (s.start..=s.end).find(|&k| !is_delimiter(name[k]))?;
            let end = (start..=s.end).rev().find(|&k| !is_delimiter(name[k]))?;
            Some(Span::new(start, end))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn from_counts(correct: usize, n_gt: usize, n_pred: usize) -> Self {
        if n_gt == 0 && n_pred == 0 {
            return Self {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            precision: ratio(correct, n_pred),
            recall: ratio(correct, n_gt),
            f1: ratio(2 * correct, n_gt + n_pred),
        }
    }
}

/// Exact-match count between two canonical span lists.
pub fn correct_spans(gt: &[EvalSpan], pred: &[EvalSpan]) -> usize {
    // canonical spans from a tiling are sorted and disjoint
    let (mut a, mut b, mut hits) = (0, 0, 0);
    while a < gt.len() && b < pred.len() {
        match gt[a].cmp(&pred[b]) {
            std::cmp::Ordering::Equal => {
                hits += 1;
                a += 1;
                b += 1;
            }
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
        }
    }
    hits
}

/// Both inputs already canonical.
pub fn score_name(gt: &[EvalSpan], pred: &[EvalSpan]) -> Scores {
    Scores::from_counts(correct_spans(gt, pred), gt.len(), pred.len())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NameReport {
    pub id: usize,
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gt_spans: usize,
    pub pred_spans: usize,
    pub correct: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub names: usize,
    pub gt_spans: usize,
    pub pred_spans: usize,
    /// mean of per-name precision
    pub precision: f64,
    /// mean of per-name recall
    pub recall: f64,
    /// mean of per-name F1; the headline number
    pub f1: f64,
    /// harmonic mean of the macro precision and recall
    pub f1_of_means: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_name: Vec<NameReport>,
}

impl EvalReport {
    pub fn without_breakdown(mut self) -> Self {
        self.per_name.clear();
        self
    }

    /// Prec/Rec/F1 table in percent.
    pub fn table(&self, label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>7} {:>7} {:>7}", "method", "Prec", "Rec", "F1");
        let _ = writeln!(
            out,
            "{:<16} {:>7.2} {:>7.2} {:>7.2}",
            label,
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1
        );
        out
    }
}

/// Scores every prediction against its ground truth. Names are read from the
/// ground truth; delimiters sit at the same positions in raw and normalized
/// text so either works.
pub fn score_corpus(ground_truth: &GroundTruthSet, predictions: &[Segmentation]) -> Result<EvalReport> {
    let mut per_name = Vec::with_capacity(predictions.len());
    for seg in predictions {
        let gt = ground_truth.get(&seg.name_id).ok_or(Error::MissingLabel(seg.name_id))?;
        let chars: Vec<char> = gt.name.chars().collect();
        let covered = seg.spans.last().map_or(0, |s| s.end + 1);
        if covered != chars.len() {
            return Err(Error::Format(format!(
                "prediction for name {} covers {covered} characters, ground truth has {}",
                seg.name_id,
                chars.len()
            )));
        }
        let g = canonicalize_spans(&gt.spans(), &chars);
        let p = canonicalize_spans(&seg.spans, &chars);
        let correct = correct_spans(&g, &p);
        let s = Scores::from_counts(correct, g.len(), p.len());
        per_name.push(NameReport {
            id: seg.name_id,
            name: gt.name.clone(),
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            gt_spans: g.len(),
            pred_spans: p.len(),
            correct,
        });
    }
    Ok(aggregate(per_name))
}

fn aggregate(per_name: Vec<NameReport>) -> EvalReport {
    let n = per_name.len();
    let mean = |f: fn(&NameReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_name.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let precision = mean(|r| r.precision);
    let recall = mean(|r| r.recall);
    let f1 = mean(|r| r.f1);
    let f1_of_means = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvalReport {
        names: n,
        gt_spans: per_name.iter().map(|r| r.gt_spans).sum(),
        pred_spans: per_name.iter().map(|r| r.pred_spans).sum(),
        precision,
        recall,
        f1,
        f1_of_means,
        per_name,
    }
}

/// Split at every alphanumeric/delimiter change; delimiter runs stay as
/// their own spans so the result tiles the name.
pub fn delimiter_baseline_spans(name: &[char]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = 0;
    for k in 1..=name.len() {
        if k == name.len() || is_delimiter(name[k]) != is_delimiter(name[k - 1]) {
            spans.push(Span::new(start, k - 1));
            start = k;
        }
    }
    spans
}

pub fn delimiter_baseline(corpus: &Corpus) -> Vec<Segmentation> {
    corpus
        .names()
        .iter()
        .map(|n| {
            Segmentation::from_spans(n.id, delimiter_baseline_spans(&n.normalized), n.len())
                .expect("baseline spans tile the name")
        })
        .collect()
}
