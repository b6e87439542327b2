//! Tie/Break decisions to character spans, and the four pipeline variants:
//! full (LM + ensemble), FW (single forward threshold), BW (single threshold
//! on reversed names) and GS (threshold picked with ground truth).

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charlm::{self, Direction, HiddenStates, LanguageModel, LmConfig, TransitionRecord};
use crate::corpus::{Corpus, GroundTruthSet, LabeledCorpus, Span};
use crate::ensemble::{self, EnsembleConfig, EnsembleModel};
use crate::error::{Error, Result};
use crate::eval::{canonicalize_spans, correct_spans, EvalSpan, Scores};
use crate::thresholds::{
    self, assign_pseudo_labels, build_histogram, Decision, Histogram, Milli, SearchIntervals, ThresholdPair, BINS,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    pub name_id: usize,
    /// Raw spans; they tile the name.
    pub spans: Vec<Span>,
    /// `decisions[i]` relates characters `i` and `i + 1`.
    pub decisions: Vec<Decision>,
}

/// Maximal runs between Breaks.
pub fn decisions_to_spans(decisions: &[Decision], len: usize) -> Result<Vec<Span>> {
    if len == 0 || decisions.len() + 1 != len {
        return Err(Error::DecisionLength {
            expected: len.saturating_sub(1),
            got: decisions.len(),
        });
    }
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, d) in decisions.iter().enumerate() {
        if *d == Decision::Break {
            spans.push(Span::new(start, i));
            start = i + 1;
        }
    }
    spans.push(Span::new(start, len - 1));
    Ok(spans)
}

/// Inverse of [`decisions_to_spans`]; fails unless `spans` tile `0..len`.
pub fn spans_to_decisions(spans: &[Span], len: usize) -> Result<Vec<Decision>> {
    let tiles = !spans.is_empty()
        && spans[0].start == 0
        && spans.last().unwrap().end + 1 == len
        && spans.iter().all(|s| s.start <= s.end)
        && spans.windows(2).all(|w| w[0].end + 1 == w[1].start);
    if !tiles {
        return Err(Error::Format(format!("spans {spans:?} do not tile a name of length {len}")));
    }
    let mut decisions = vec![Decision::Tie; len - 1];
    for s in &spans[..spans.len() - 1] {
        decisions[s.end] = Decision::Break;
    }
    Ok(decisions)
}

impl Segmentation {
    pub fn from_decisions(name_id: usize, decisions: Vec<Decision>, len: usize) -> Result<Self> {
        let spans = decisions_to_spans(&decisions, len)?;
        Ok(Self {
            name_id,
            spans,
            decisions,
        })
    }

    pub fn from_spans(name_id: usize, spans: Vec<Span>, len: usize) -> Result<Self> {
        let decisions = spans_to_decisions(&spans, len)?;
        Ok(Self {
            name_id,
            spans,
            decisions,
        })
    }

    pub fn len(&self) -> usize {
        self.decisions.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same segmentation read on the reversed name.
    pub fn mirrored(&self) -> Self {
        let n = self.len();
        let mut spans: Vec<Span> = self.spans.iter().map(|s| s.mirrored(n)).collect();
        spans.reverse();
        let mut decisions = self.decisions.clone();
        decisions.reverse();
        Self {
            name_id: self.name_id,
            spans,
            decisions,
        }
    }

    pub fn segments(&self, name: &[char]) -> Vec<String> {
        self.spans.iter().map(|s| name[s.start..=s.end].iter().collect()).collect()
    }

    /// `SOD|A0|R000|__|ASO`
    pub fn pretty(&self, name: &[char]) -> String {
        self.segments(name).join("|")
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentationLine {
    id: usize,
    name: String,
    segments: Vec<String>,
    spans: Vec<[usize; 2]>,
}

/// One JSON object per name: id, raw name, raw segment strings, spans.
pub fn segmentations_to_jsonl(corpus: &Corpus, segs: &[Segmentation]) -> Result<String> {
    let mut out = String::new();
    for seg in segs {
        let name = corpus.get(seg.name_id).ok_or(Error::MissingLabel(seg.name_id))?;
        let line = SegmentationLine {
            id: seg.name_id,
            name: name.raw_string(),
            segments: seg.segments(&name.raw),
            spans: seg.spans.iter().map(|s| [s.start, s.end]).collect(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn segmentations_to_pretty(corpus: &Corpus, segs: &[Segmentation]) -> Result<String> {
    let mut out = String::new();
    for seg in segs {
        let name = corpus.get(seg.name_id).ok_or(Error::MissingLabel(seg.name_id))?;
        let _ = writeln!(out, "{}", seg.pretty(&name.raw));
    }
    Ok(out)
}

pub fn segmentations_from_jsonl(text: &str) -> Result<Vec<Segmentation>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let line: SegmentationLine = serde_json::from_str(l)?;
            let len = line.name.chars().count();
            let spans = line.spans.iter().map(|&[s, e]| Span::new(s, e)).collect();
            Segmentation::from_spans(line.id, spans, len)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineVariant {
    Full,
    #[serde(rename = "FW")]
    Fw,
    #[serde(rename = "BW")]
    Bw,
    #[serde(rename = "GS")]
    Gs,
}

impl PipelineVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineVariant::Full => "full",
            PipelineVariant::Fw => "fw",
            PipelineVariant::Bw => "bw",
            PipelineVariant::Gs => "gs",
        }
    }

    pub fn needs_ground_truth(self) -> bool {
        self == PipelineVariant::Gs
    }
}

impl std::str::FromStr for PipelineVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(PipelineVariant::Full),
            "fw" => Ok(PipelineVariant::Fw),
            "bw" => Ok(PipelineVariant::Bw),
            "gs" => Ok(PipelineVariant::Gs),
            _ => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    pub lm: LmConfig,
    pub ensemble: EnsembleConfig,
    pub intervals: SearchIntervals,
}

/// Unfolds per-transition decisions (corpus order, as produced by
/// [`LanguageModel::transitions`]) back into one segmentation per name.
pub fn segment_from_decisions(
    corpus: &Corpus,
    keys: &[(usize, usize)],
    decisions: &[Decision],
) -> Result<Vec<Segmentation>> {
    if keys.len() != decisions.len() {
        return Err(Error::DecisionLength {
            expected: keys.len(),
            got: decisions.len(),
        });
    }
    let mut per_name: HashMap<usize, Vec<Decision>> = corpus
        .names()
        .iter()
        .map(|n| (n.id, vec![Decision::Tie; n.len() - 1]))
        .collect();
    for (&(id, pos), &d) in keys.iter().zip(decisions) {
        let slot = per_name
            .get_mut(&id)
            .and_then(|v| v.get_mut(pos))
            .ok_or_else(|| Error::ModelMismatch(format!("transition ({id}, {pos}) not in corpus")))?;
        *slot = d;
    }
    corpus
        .names()
        .iter()
        .map(|n| Segmentation::from_decisions(n.id, per_name.remove(&n.id).unwrap(), n.len()))
        .collect()
}

fn keys_of(records: &[TransitionRecord]) -> Vec<(usize, usize)> {
    records.iter().map(|r| (r.name_id, r.position)).collect()
}

/// `p >= t` Tie, otherwise Break.
pub fn segment_with_threshold(corpus: &Corpus, records: &[TransitionRecord], t: Milli) -> Result<Vec<Segmentation>> {
    let tv = t.value();
    let decisions: Vec<Decision> = records
        .iter()
        .map(|r| if r.probability >= tv { Decision::Tie } else { Decision::Break })
        .collect();
    segment_from_decisions(corpus, &keys_of(records), &decisions)
}

/// Runs `f` on the corpus in the model's reading direction and mirrors the
/// result back for a backward model.
fn in_direction<F>(corpus: &Corpus, direction: Direction, f: F) -> Result<Vec<Segmentation>>
where
    F: FnOnce(&Corpus) -> Result<Vec<Segmentation>>,
{
    match direction {
        Direction::Forward => f(corpus),
        Direction::Backward => Ok(f(&corpus.reversed())?.iter().map(Segmentation::mirrored).collect()),
    }
}

/// Single-threshold segmentation with an already trained LM. A backward
/// model is applied to the reversed names.
pub fn segment_single_threshold(corpus: &Corpus, lm: &LanguageModel, t: Milli) -> Result<Vec<Segmentation>> {
    in_direction(corpus, lm.direction, |c| {
        let records = lm.transitions(c)?;
        segment_with_threshold(c, &records, t)
    })
}

/// Ensemble segmentation with an already trained LM and ensemble.
pub fn segment_with_ensemble(corpus: &Corpus, lm: &LanguageModel, model: &EnsembleModel) -> Result<Vec<Segmentation>> {
    let lm_hash = lm.content_hash();
    in_direction(corpus, lm.direction, |c| {
        let records = lm.transitions(c)?;
        let hidden = HiddenStates::from_records(&lm_hash, &records)?;
        let decisions: Vec<Decision> = model
            .predict_many(hidden.values.view(), &lm_hash)?
            .into_iter()
            .map(|p| p.decision)
            .collect();
        segment_from_decisions(c, &hidden.keys, &decisions)
    })
}

/// Everything derived from one trained LM that the variants share.
#[derive(Clone, Debug)]
pub struct LmStage {
    pub model: LanguageModel,
    pub loss_history: Vec<f64>,
    pub records: Vec<TransitionRecord>,
    pub histogram: Histogram,
}

impl LmStage {
    /// Trains on `corpus` as given; the caller reverses it for BW.
    pub fn train(corpus: &Corpus, config: &LmConfig, direction: Direction) -> Result<Self> {
        let trained = charlm::train(corpus, config)?;
        let mut model = trained.model;
        model.direction = direction;
        Self::from_model(corpus, model, trained.loss_history)
    }

    pub fn from_model(corpus: &Corpus, model: LanguageModel, loss_history: Vec<f64>) -> Result<Self> {
        let records = model.transitions(corpus)?;
        let histogram = build_histogram(&records)?;
        Ok(Self {
            model,
            loss_history,
            records,
            histogram,
        })
    }

    pub fn tie_threshold(&self, intervals: &SearchIntervals) -> Milli {
        self.thresholds(intervals).t1
    }

    pub fn thresholds(&self, intervals: &SearchIntervals) -> ThresholdPair {
        thresholds::resolve_thresholds(&self.histogram, intervals)
    }

    pub fn hidden_states(&self) -> Result<HiddenStates> {
        HiddenStates::from_records(&self.model.content_hash(), &self.records)
    }
}

#[derive(Clone, Debug)]
pub struct FullOutcome {
    pub segmentations: Vec<Segmentation>,
    pub thresholds: ThresholdPair,
    /// `None` when the pseudo labels were unanimous and no classifier was fit.
    pub ensemble: Option<EnsembleModel>,
}

/// Full pipeline on a trained forward stage. `corpus` is the one the stage
/// was built on.
pub fn full_from_stage(corpus: &Corpus, stage: &LmStage, config: &PipelineConfig) -> Result<FullOutcome> {
    let pair = stage.thresholds(&config.intervals);
    let labels = assign_pseudo_labels(&stage.records, &pair);
    let hidden = stage.hidden_states()?;
    let model = match ensemble::train_ensemble(&labels, &hidden, &config.ensemble) {
        Err(Error::DegeneratePseudoLabels { ties, breaks }) if ties + breaks > 0 => {
            // every confident transition agrees; there is nothing to separate
            let d = if ties > 0 { Decision::Tie } else { Decision::Break };
            log::warn!("pseudo labels are all {d:?} ({} labelled); skipping the ensemble", ties + breaks);
            return Ok(FullOutcome {
                segmentations: segment_from_decisions(corpus, &hidden.keys, &vec![d; hidden.len()])?,
                thresholds: pair,
                ensemble: None,
            });
        }
        other => other?,
    };
    let decisions: Vec<Decision> = model
        .predict_many(hidden.values.view(), &hidden.lm_hash)?
        .into_iter()
        .map(|p| p.decision)
        .collect();
    let segmentations = segment_from_decisions(corpus, &hidden.keys, &decisions)?;
    Ok(FullOutcome {
        segmentations,
        thresholds: pair,
        ensemble: Some(model),
    })
}

#[derive(Clone, Debug)]
pub struct SingleOutcome {
    pub segmentations: Vec<Segmentation>,
    pub threshold: Milli,
}

/// Single-threshold segmentation using the stage's Tie-interval peak. For a
/// backward stage `corpus` must be the reversed corpus; the result is
/// mirrored back to original positions.
pub fn single_from_stage(corpus: &Corpus, stage: &LmStage, intervals: &SearchIntervals) -> Result<SingleOutcome> {
    let t = stage.tie_threshold(intervals);
    let mut segmentations = segment_with_threshold(corpus, &stage.records, t)?;
    if stage.model.direction == Direction::Backward {
        segmentations = segmentations.iter().map(Segmentation::mirrored).collect();
    }
    Ok(SingleOutcome {
        segmentations,
        threshold: t,
    })
}

pub fn run_full(corpus: &Corpus, config: &PipelineConfig) -> Result<FullOutcome> {
    let stage = LmStage::train(corpus, &config.lm, Direction::Forward)?;
    full_from_stage(corpus, &stage, config)
}

pub fn run_fw(corpus: &Corpus, config: &PipelineConfig) -> Result<SingleOutcome> {
    let stage = LmStage::train(corpus, &config.lm, Direction::Forward)?;
    single_from_stage(corpus, &stage, &config.intervals)
}

/// Trains on reversed names and picks thresholds from that model's own
/// histogram.
pub fn run_bw(corpus: &Corpus, config: &PipelineConfig) -> Result<SingleOutcome> {
    let reversed = corpus.reversed();
    let stage = LmStage::train(&reversed, &config.lm, Direction::Backward)?;
    single_from_stage(&reversed, &stage, &config.intervals)
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub segmentations: Vec<Segmentation>,
    pub threshold: Milli,
    pub f1: f64,
    /// macro F1 at every grid threshold `k / 1000`
    pub curve: Vec<f64>,
}

/// Every three-decimal threshold in `[0, 1]`, scored by macro F1 against
/// ground truth; the lowest best threshold wins.
pub fn grid_search(corpus: &Corpus, records: &[TransitionRecord], ground_truth: &GroundTruthSet) -> Result<GridOutcome> {
    if ground_truth.is_empty() {
        return Err(Error::NeedsLabels);
    }
    struct NameCase {
        chars: Vec<char>,
        gt: Vec<EvalSpan>,
        probs: Vec<f64>,
    }
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut cases = Vec::with_capacity(corpus.len());
    for n in corpus.names() {
        let gt = ground_truth.get(&n.id).ok_or(Error::MissingLabel(n.id))?;
        if gt.tags.len() != n.len() {
            return Err(Error::LabelLength {
                name: n.raw_string(),
                name_len: n.len(),
                tag_len: gt.tags.len(),
            });
        }
        index.insert(n.id, cases.len());
        cases.push(NameCase {
            gt: canonicalize_spans(&gt.spans(), &n.normalized),
            chars: n.normalized.clone(),
            probs: vec![f64::NAN; n.len() - 1],
        });
    }
    for r in records {
        let case = index
            .get(&r.name_id)
            .map(|&k| &mut cases[k])
            .ok_or_else(|| Error::ModelMismatch(format!("transition for unknown name {}", r.name_id)))?;
        case.probs[r.position] = r.probability;
    }
    let curve: Vec<f64> = (0..=BINS)
        .into_par_iter()
        .map(|k| {
            let tv = Milli(k as u16).value();
            let total: f64 = cases
                .iter()
                .map(|c| {
                    let decisions: Vec<Decision> = c
                        .probs
                        .iter()
                        .map(|&p| if p >= tv { Decision::Tie } else { Decision::Break })
                        .collect();
                    let spans = decisions_to_spans(&decisions, c.chars.len()).expect("length matches");
                    let pred = canonicalize_spans(&spans, &c.chars);
                    Scores::from_counts(correct_spans(&c.gt, &pred), c.gt.len(), pred.len()).f1
                })
                .sum();
            total / cases.len() as f64
        })
        .collect();
    let mut best = 0;
    for k in 1..curve.len() {
        if curve[k] > curve[best] {
            best = k;
        }
    }
    let threshold = Milli(best as u16);
    Ok(GridOutcome {
        segmentations: segment_with_threshold(corpus, records, threshold)?,
        threshold,
        f1: curve[best],
        curve,
    })
}

pub fn gs_from_stage(labeled: &LabeledCorpus, stage: &LmStage) -> Result<GridOutcome> {
    grid_search(&labeled.corpus, &stage.records, &labeled.ground_truth)
}

pub fn run_gs(labeled: &LabeledCorpus, config: &PipelineConfig) -> Result<GridOutcome> {
    let stage = LmStage::train(&labeled.corpus, &config.lm, Direction::Forward)?;
    gs_from_stage(labeled, &stage)
}
