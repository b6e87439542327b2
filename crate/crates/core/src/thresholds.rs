//! Transition-probability histogram, threshold picking and Tie/Break/Unknown
//! pseudo labels.
//!
//! Thresholds live on a 0.001 grid. A threshold is stored as an integer
//! number of thousandths so that "three decimal places" is exact.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::charlm::TransitionRecord;
use crate::corpus::GroundTruthSet;
use crate::error::{Error, Result};

pub const BINS: usize = 1000;

/// A probability on the 0.001 grid, in thousandths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Milli(pub u16);

impl Milli {
    pub fn value(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Nearest grid point.
    pub fn round(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("threshold {p} outside [0, 1]")));
        }
        Ok(Milli((p * 1000.0).round() as u16))
    }
}

impl fmt::Display for Milli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.value())
    }
}

impl Serialize for Milli {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Milli {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Milli::round(v).map_err(serde::de::Error::custom)
    }
}

/// Closed search interval on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Milli,
    pub hi: Milli,
}

impl Interval {
    pub const fn new(lo: u16, hi: u16) -> Self {
        Self {
            lo: Milli(lo),
            hi: Milli(hi),
        }
    }
}

/// Search intervals for the two thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchIntervals {
    /// where the Tie threshold t1 is looked for
    pub tie: Interval,
    /// where the Break threshold t0 is looked for
    pub brk: Interval,
}

impl Default for SearchIntervals {
    fn default() -> Self {
        Self {
            tie: Interval::new(550, 950),
            brk: Interval::new(50, 150),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_of(p: f64) -> usize {
        ((p * BINS as f64).floor() as usize).min(BINS - 1)
    }

    /// Lowest-index maximal bin among bins `lo..=hi` (bin `k` covers
    /// `[k/1000, (k+1)/1000)`), or `None` when they are all empty.
    fn peak(&self, interval: Interval) -> Option<usize> {
        let lo = interval.lo.0 as usize;
        let hi = (interval.hi.0 as usize).min(BINS - 1);
        let mut best: Option<(usize, u64)> = None;
        for k in lo..=hi {
            let c = self.counts[k];
            if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
                best = Some((k, c));
            }
        }
        best.map(|(k, _)| k)
    }
}

pub fn build_histogram(records: &[TransitionRecord]) -> Result<Histogram> {
    build_histogram_from(records.iter().map(|r| r.probability))
}

pub fn build_histogram_from<I: IntoIterator<Item = f64>>(probabilities: I) -> Result<Histogram> {
    let mut counts = vec![0u64; BINS];
    let mut any = false;
    for p in probabilities {
        counts[Histogram::bin_of(p)] += 1;
        any = true;
    }
    if !any {
        return Err(Error::EmptyTransitions);
    }
    Ok(Histogram { counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub t0: Milli,
    pub t1: Milli,
}

impl ThresholdPair {
    pub fn new(t0: Milli, t1: Milli) -> Result<Self> {
        if t0 >= t1 {
            return Err(Error::Config(format!("t0 {t0} must be below t1 {t1}")));
        }
        Ok(Self { t0, t1 })
    }
}

/// Tie threshold: highest peak inside the Tie interval. The threshold is the
/// lower edge of the peak bin so the whole peak satisfies `p >= t1`.
pub fn select_tie_threshold(hist: &Histogram, intervals: &SearchIntervals) -> Result<Milli> {
    hist.peak(intervals.tie)
        .map(|k| Milli(k as u16))
        .ok_or(Error::NoPeak {
            lo: intervals.tie.lo.value(),
            hi: intervals.tie.hi.value(),
        })
}

pub fn select_break_threshold(hist: &Histogram, intervals: &SearchIntervals) -> Result<Milli> {
    hist.peak(intervals.brk)
        .map(|k| Milli(k as u16))
        .ok_or(Error::NoPeak {
            lo: intervals.brk.lo.value(),
            hi: intervals.brk.hi.value(),
        })
}

pub fn select_thresholds(hist: &Histogram, intervals: &SearchIntervals) -> Result<ThresholdPair> {
    let t1 = select_tie_threshold(hist, intervals)?;
    let t0 = select_break_threshold(hist, intervals)?;
    ThresholdPair::new(t0, t1)
}

/// Like [`select_thresholds`], but an empty interval resolves to its upper
/// edge instead of failing. No probability falls inside an empty interval,
/// so every threshold in it labels the corpus identically and the choice is
/// immaterial.
pub fn resolve_thresholds(hist: &Histogram, intervals: &SearchIntervals) -> ThresholdPair {
    let pick = |iv: Interval| hist.peak(iv).map_or(iv.hi, |k| Milli(k as u16));
    let (t0, t1) = (pick(intervals.brk), pick(intervals.tie));
    if hist.peak(intervals.tie).is_none() || hist.peak(intervals.brk).is_none() {
        log::warn!("empty threshold search interval; using t0 = {t0}, t1 = {t1}");
    }
    ThresholdPair { t0, t1 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Tie,
    Break,
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Tie => "Tie",
            Label::Break => "Break",
            Label::Unknown => "Unknown",
        }
    }

    pub fn decision(self) -> Option<Decision> {
        match self {
            Label::Tie => Some(Decision::Tie),
            Label::Break => Some(Decision::Break),
            Label::Unknown => None,
        }
    }
}

/// Final relation between two adjacent characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Tie,
    Break,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabel {
    #[serde(rename = "id")]
    pub name_id: usize,
    #[serde(rename = "i")]
    pub position: usize,
    pub label: Label,
}

/// `[0, t0]` Break, `(t0, t1)` Unknown, `[t1, 1]` Tie.
pub fn label_for(p: f64, thresholds: &ThresholdPair) -> Label {
    if p <= thresholds.t0.value() {
        Label::Break
    } else if p >= thresholds.t1.value() {
        Label::Tie
    } else {
        Label::Unknown
    }
}

pub fn assign_pseudo_labels(records: &[TransitionRecord], thresholds: &ThresholdPair) -> Vec<PseudoLabel> {
    records
        .iter()
        .map(|r| PseudoLabel {
            name_id: r.name_id,
            position: r.position,
            label: label_for(r.probability, thresholds),
        })
        .collect()
}

/// `p >= t` Tie, otherwise Break.
pub fn single_threshold_labels(records: &[TransitionRecord], t: Milli) -> Vec<PseudoLabel> {
    let tv = t.value();
    records
        .iter()
        .map(|r| PseudoLabel {
            name_id: r.name_id,
            position: r.position,
            label: if r.probability >= tv { Label::Tie } else { Label::Break },
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub t0: Milli,
    pub t1: Milli,
    pub histogram: Vec<u64>,
    pub n_transitions: u64,
}

impl ThresholdReport {
    pub fn new(thresholds: ThresholdPair, hist: &Histogram) -> Self {
        Self {
            t0: thresholds.t0,
            t1: thresholds.t1,
            histogram: hist.counts.clone(),
            n_transitions: hist.total(),
        }
    }

    pub fn thresholds(&self) -> Result<ThresholdPair> {
        ThresholdPair::new(self.t0, self.t1)
    }
}

pub fn pseudo_labels_to_jsonl(labels: &[PseudoLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&serde_json::to_string(l).expect("label serializes"));
        out.push('\n');
    }
    out
}

pub fn pseudo_labels_from_jsonl(text: &str) -> Result<Vec<PseudoLabel>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Tie/Break precision at every grid threshold. `None` where the
/// denominator is empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrecisionCurves {
    pub thresholds: Vec<Milli>,
    /// true Ties among transitions with `p >= tau`
    pub tie_precision: Vec<Option<f64>>,
    /// true Breaks among transitions with `p < tau`
    pub break_precision: Vec<Option<f64>>,
}

/// Diagnostic only: needs ground truth, so it never feeds the pipeline.
///
/// A transition is a true Break when the ground truth puts characters `i`
/// and `i + 1` in different evaluation segments (delimiters count as a
/// boundary on either side).
pub fn precision_curves(records: &[TransitionRecord], ground_truth: &GroundTruthSet) -> Result<PrecisionCurves> {
    if ground_truth.is_empty() {
        return Err(Error::NeedsLabels);
    }
    let mut truth = Vec::with_capacity(records.len());
    for r in records {
        let gt = ground_truth.get(&r.name_id).ok_or(Error::MissingLabel(r.name_id))?;
        truth.push((r.probability, is_true_tie(&gt.tags, r.position)));
    }
    // sorted by probability; a prefix of ties counts gives O(log n) per grid point
    truth.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ties_before = Vec::with_capacity(truth.len() + 1);
    ties_before.push(0u64);
    for &(_, tie) in &truth {
        ties_before.push(ties_before.last().unwrap() + tie as u64);
    }
    let total = truth.len();
    let total_ties = ties_before[total];
    let mut thresholds = Vec::with_capacity(BINS + 1);
    let mut tie_precision = Vec::with_capacity(BINS + 1);
    let mut break_precision = Vec::with_capacity(BINS + 1);
    for k in 0..=BINS {
        let tau = Milli(k as u16);
        let below = truth.partition_point(|(p, _)| *p < tau.value());
        let below_ties = ties_before[below];
        let above = total - below;
        let above_ties = total_ties - below_ties;
        thresholds.push(tau);
        tie_precision.push((above > 0).then(|| above_ties as f64 / above as f64));
        break_precision.push((below > 0).then(|| (below as u64 - below_ties) as f64 / below as f64));
    }
    Ok(PrecisionCurves {
        thresholds,
        tie_precision,
        break_precision,
    })
}

/// Whether ground truth keeps characters `i` and `i + 1` in one segment.
pub fn is_true_tie(tags: &[crate::corpus::Bio], i: usize) -> bool {
    use crate::corpus::Bio;
    matches!((tags[i], tags[i + 1]), (Bio::B | Bio::I, Bio::I))
}
