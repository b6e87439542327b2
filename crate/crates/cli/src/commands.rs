//! One function per subcommand. Each returns the JSON it wants on stdout,
//! or `None` when it already wrote its own output.

use std::path::{Path, PathBuf};

use log::info;
use sensorseg::charlm::{self, read_hidden_states, transitions_from_jsonl, transitions_to_jsonl, Direction, LanguageModel};
use sensorseg::charlm::write_hidden_states;
use sensorseg::charlm::HiddenStates;
use sensorseg::config::RunConfig;
use sensorseg::corpus::{load_corpus, load_ground_truth, Corpus, GroundTruthSet};
use sensorseg::ensemble::{train_ensemble as fit_ensemble, EnsembleModel};
use sensorseg::eval::{delimiter_baseline, score_corpus};
use sensorseg::segmenter::{
    grid_search, segment_from_decisions, segment_single_threshold, segment_with_ensemble, segmentations_from_jsonl,
    segmentations_to_jsonl, segmentations_to_pretty, PipelineVariant, Segmentation,
};
use sensorseg::synth::{ground_truth_text, names_text, parse_scheme, ScenarioTag};
use sensorseg::thresholds::{
    assign_pseudo_labels, build_histogram, precision_curves, pseudo_labels_from_jsonl, pseudo_labels_to_jsonl,
    resolve_thresholds, Decision, Label, ThresholdReport,
};
use sensorseg::{Error, Result};
use serde_json::{json, Value};

use crate::artifacts::{to_json_text, write_artifact, write_file, Inputs};
use crate::Stage;

impl Stage {
    fn prefix(&self) -> &'static str {
        if self.reverse {
            "bw"
        } else {
            "fw"
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.work.join(format!("{}.{name}", self.prefix()))
    }

    fn direction(&self) -> Direction {
        if self.reverse {
            Direction::Backward
        } else {
            Direction::Forward
        }
    }

    /// The corpus in this stage's reading order.
    fn oriented(&self, corpus: Corpus) -> Corpus {
        if self.reverse {
            corpus.reversed()
        } else {
            corpus
        }
    }
}

fn text(bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn load_names(inputs: &mut Inputs, role: &str, path: &Path) -> Result<Corpus> {
    load_corpus(&inputs.file(role, path)?[..])
}

fn load_gt(inputs: &mut Inputs, path: &Path) -> Result<GroundTruthSet> {
    load_ground_truth(&inputs.file("gt", path)?[..])
}

fn load_lm(inputs: &mut Inputs, path: &Path, direction: Direction) -> Result<LanguageModel> {
    let (bytes, _) = inputs.artifact("lm", path)?;
    let lm = LanguageModel::from_bytes(&bytes)?;
    if lm.direction != direction {
        return Err(Error::ModelMismatch(format!(
            "{} is a {:?} model, expected {direction:?}",
            path.display(),
            lm.direction
        )));
    }
    Ok(lm)
}

fn load_transitions(inputs: &mut Inputs, stage: &Stage) -> Result<Vec<charlm::TransitionRecord>> {
    let (bytes, _) = inputs.artifact("transitions", &stage.path("transitions.jsonl"))?;
    transitions_from_jsonl(&text(bytes)?)
}

pub fn synth(cfg: &RunConfig, scheme: &str, count: usize, out: &Path, seed: Option<u64>) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    let path = Path::new(scheme);
    let (scheme, source) = if path.is_file() {
        let mut s = parse_scheme(&text(inputs.file("scheme", path)?)?)?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        (s, "file".to_string())
    } else {
        let tag: ScenarioTag = scheme.parse()?;
        (tag.scheme(seed.unwrap_or(cfg.seed)), tag.as_str().to_string())
    };
    let names = scheme.generate(count)?;
    let details = json!({ "scheme": source, "seed": scheme.seed, "count": count });
    write_artifact(&out.join("names.txt"), names_text(&names).as_bytes(), "synth", cfg, &inputs, details.clone())?;
    write_artifact(&out.join("gt.jsonl"), ground_truth_text(&names).as_bytes(), "synth", cfg, &inputs, details.clone())?;
    Ok(Some(details))
}

pub fn train_lm(cfg: &RunConfig, names: &Path, stage: &Stage) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    let corpus = stage.oriented(load_names(&mut inputs, "names", names)?);
    let pc = cfg.pipeline();
    info!(
        "training {:?} LM on {} names for {} epochs",
        stage.direction(),
        corpus.len(),
        pc.lm.epochs
    );
    let trained = charlm::train(&corpus, &pc.lm)?;
    let mut model = trained.model;
    model.direction = stage.direction();
    let bytes = model.to_bytes();
    let final_loss = trained.loss_history.last().copied();
    write_artifact(
        &stage.path("lm.bin"),
        &bytes,
        "train-lm",
        cfg,
        &inputs,
        json!({ "loss_history": trained.loss_history }),
    )?;
    Ok(Some(json!({
        "lm_hash": model.content_hash(),
        "direction": stage.prefix(),
        "names": corpus.len(),
        "final_loss": final_loss,
    })))
}

pub fn probe(cfg: &RunConfig, names: &Path, stage: &Stage) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    let corpus = stage.oriented(load_names(&mut inputs, "names", names)?);
    let lm = load_lm(&mut inputs, &stage.path("lm.bin"), stage.direction())?;
    let records = lm.transitions(&corpus)?;
    let hidden = HiddenStates::from_records(&lm.content_hash(), &records)?;
    let details = json!({ "transitions": records.len(), "hidden_dim": hidden.dim() });
    write_artifact(
        &stage.path("transitions.jsonl"),
        transitions_to_jsonl(&records).as_bytes(),
        "probe",
        cfg,
        &inputs,
        details.clone(),
    )?;
    write_artifact(
        &stage.path("hidden.bin"),
        &write_hidden_states(&hidden),
        "probe",
        cfg,
        &inputs,
        details.clone(),
    )?;
    Ok(Some(details))
}

pub fn thresholds(cfg: &RunConfig, stage: &Stage) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    let records = load_transitions(&mut inputs, stage)?;
    let hist = build_histogram(&records)?;
    let pair = resolve_thresholds(&hist, &cfg.intervals);
    let report = ThresholdReport::new(pair, &hist);
    let body = serde_json::to_string(&report)? + "\n";
    write_artifact(&stage.path("thresholds.json"), body.as_bytes(), "thresholds", cfg, &inputs, Value::Null)?;
    Ok(Some(json!({ "t0": report.t0, "t1": report.t1, "transitions": report.n_transitions })))
}

fn read_thresholds(inputs: &mut Inputs, stage: &Stage) -> Result<ThresholdReport> {
    let (bytes, _) = inputs.artifact("thresholds", &stage.path("thresholds.json"))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn pseudo_labels(cfg: &RunConfig, stage: &Stage) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    let records = load_transitions(&mut inputs, stage)?;
    let pair = read_thresholds(&mut inputs, stage)?.thresholds()?;
    let labels = assign_pseudo_labels(&records, &pair);
    let count = |l: Label| labels.iter().filter(|p| p.label == l).count();
    let counts = json!({
        "tie": count(Label::Tie),
        "break": count(Label::Break),
        "unknown": count(Label::Unknown),
    });
    write_artifact(
        &stage.path("labels.jsonl"),
        pseudo_labels_to_jsonl(&labels).as_bytes(),
        "pseudo-labels",
        cfg,
        &inputs,
        counts.clone(),
    )?;
    Ok(Some(counts))
}

pub fn train_ensemble(cfg: &RunConfig, stage: &Stage) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    // loaded only so its provenance ties the labels to the hidden states
    load_transitions(&mut inputs, stage)?;
    let (labels, _) = inputs.artifact("labels", &stage.path("labels.jsonl"))?;
    let labels = pseudo_labels_from_jsonl(&text(labels)?)?;
    let (hidden, _) = inputs.artifact("hidden", &stage.path("hidden.bin"))?;
    let hidden = read_hidden_states(&hidden)?;
    let out = stage.path("ensemble.bin");
    let pc = cfg.pipeline();
    match fit_ensemble(&labels, &hidden, &pc.ensemble) {
        Err(Error::DegeneratePseudoLabels { ties, breaks }) if ties + breaks > 0 => {
            let d = if ties > 0 { "Tie" } else { "Break" };
            log::warn!("pseudo labels are all {d}; recording a constant decision instead of an ensemble");
            let details = json!({ "unanimous": d, "lm_hash": hidden.lm_hash });
            write_artifact(&out, b"", "train-ensemble", cfg, &inputs, details.clone())?;
            Ok(Some(details))
        }
        Err(e) => Err(e),
        Ok(model) => {
            let details = json!({ "members": model.members.len(), "lm_hash": model.lm_hash });
            write_artifact(&out, &model.to_bytes(), "train-ensemble", cfg, &inputs, details.clone())?;
            Ok(Some(details))
        }
    }
}

fn emit_segmentations(
    cfg: &RunConfig,
    inputs: &Inputs,
    corpus: &Corpus,
    segs: &[Segmentation],
    command: &str,
    out: Option<&Path>,
    pretty: bool,
) -> Result<Option<Value>> {
    let jsonl = segmentations_to_jsonl(corpus, segs)?;
    if pretty {
        print!("{}", segmentations_to_pretty(corpus, segs)?);
    }
    match out {
        Some(path) => {
            let summary = json!({
                "command": command,
                "names": segs.len(),
                "segments": segs.iter().map(|s| s.spans.len()).sum::<usize>(),
            });
            write_artifact(path, jsonl.as_bytes(), command, cfg, inputs, summary.clone())?;
            Ok((!pretty).then_some(summary))
        }
        None => {
            if !pretty {
                print!("{jsonl}");
            }
            Ok(None)
        }
    }
}

pub fn segment(
    cfg: &RunConfig,
    variant: PipelineVariant,
    names: &Path,
    work: &Path,
    out: Option<&Path>,
    pretty: bool,
) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    // any names may be segmented, not just the training corpus
    let corpus = load_names(&mut inputs, "corpus", names)?;
    let stage = Stage {
        work: work.to_path_buf(),
        reverse: variant == PipelineVariant::Bw,
    };
    let lm = load_lm(&mut inputs, &stage.path("lm.bin"), stage.direction())?;
    let segs = match variant {
        PipelineVariant::Full => {
            let (bytes, meta) = inputs.artifact("ensemble", &stage.path("ensemble.bin"))?;
            match meta["details"]["unanimous"].as_str() {
                Some(d) => {
                    if meta["details"]["lm_hash"].as_str() != Some(lm.content_hash().as_str()) {
                        return Err(Error::ModelMismatch("ensemble was built on a different LM".into()));
                    }
                    let d = if d == "Tie" { Decision::Tie } else { Decision::Break };
                    let records = lm.transitions(&corpus)?;
                    let keys: Vec<(usize, usize)> = records.iter().map(|r| (r.name_id, r.position)).collect();
                    segment_from_decisions(&corpus, &keys, &vec![d; keys.len()])?
                }
                None => segment_with_ensemble(&corpus, &lm, &EnsembleModel::from_bytes(&bytes)?)?,
            }
        }
        PipelineVariant::Fw | PipelineVariant::Bw => {
            let t1 = read_thresholds(&mut inputs, &stage)?.t1;
            segment_single_threshold(&corpus, &lm, t1)?
        }
        PipelineVariant::Gs => return Err(Error::NeedsLabels),
    };
    emit_segmentations(cfg, &inputs, &corpus, &segs, &format!("segment-{}", variant.as_str()), out, pretty)
}

pub fn evaluate(pred: &Path, gt: &Path, per_name: bool) -> Result<Value> {
    let mut inputs = Inputs::default();
    let preds = segmentations_from_jsonl(&text(inputs.file("pred", pred)?)?)?;
    let gt = load_gt(&mut inputs, gt)?;
    let report = score_corpus(&gt, &preds)?;
    let report = if per_name { report } else { report.without_breakdown() };
    Ok(serde_json::to_value(report)?)
}

pub fn gridsearch(cfg: &RunConfig, names: &Path, work: &Path, gt: Option<&Path>, out: Option<&Path>) -> Result<Value> {
    let gt = gt.ok_or(Error::NeedsLabels)?;
    let mut inputs = Inputs::default();
    let corpus = load_names(&mut inputs, "names", names)?;
    let stage = Stage {
        work: work.to_path_buf(),
        reverse: false,
    };
    let records = load_transitions(&mut inputs, &stage)?;
    let gt = load_gt(&mut inputs, gt)?;
    let outcome = grid_search(&corpus, &records, &gt)?;
    if let Some(path) = out {
        let jsonl = segmentations_to_jsonl(&corpus, &outcome.segmentations)?;
        let details = json!({ "threshold": outcome.threshold, "f1": outcome.f1 });
        write_artifact(path, jsonl.as_bytes(), "gridsearch", cfg, &inputs, details)?;
    }
    Ok(json!({ "threshold": outcome.threshold, "f1": outcome.f1, "curve": outcome.curve }))
}

pub fn baseline(cfg: &RunConfig, names: &Path, out: Option<&Path>) -> Result<Option<Value>> {
    let mut inputs = Inputs::default();
    let corpus = load_names(&mut inputs, "corpus", names)?;
    let segs = delimiter_baseline(&corpus);
    emit_segmentations(cfg, &inputs, &corpus, &segs, "baseline", out, false)
}

pub fn curves(work: &Path, gt: Option<&Path>) -> Result<Value> {
    let gt = gt.ok_or(Error::NeedsLabels)?;
    let mut inputs = Inputs::default();
    let stage = Stage {
        work: work.to_path_buf(),
        reverse: false,
    };
    let records = load_transitions(&mut inputs, &stage)?;
    let gt = load_gt(&mut inputs, gt)?;
    Ok(serde_json::to_value(precision_curves(&records, &gt)?)?)
}

pub fn run_all(cfg: &RunConfig, names: &Path, work: &Path, gt: Option<&Path>, with_bw: bool) -> Result<Value> {
    let mut summary = serde_json::Map::new();
    let mut directions = vec![false];
    if with_bw {
        directions.push(true);
    }
    for reverse in directions {
        let stage = Stage {
            work: work.to_path_buf(),
            reverse,
        };
        let mut steps = serde_json::Map::new();
        steps.insert("train-lm".into(), train_lm(cfg, names, &stage)?.unwrap_or_default());
        steps.insert("probe".into(), probe(cfg, names, &stage)?.unwrap_or_default());
        steps.insert("thresholds".into(), thresholds(cfg, &stage)?.unwrap_or_default());
        if !reverse {
            steps.insert("pseudo-labels".into(), pseudo_labels(cfg, &stage)?.unwrap_or_default());
            steps.insert("train-ensemble".into(), train_ensemble(cfg, &stage)?.unwrap_or_default());
        }
        summary.insert(stage.prefix().into(), Value::Object(steps));
    }
    let seg_path = |v: &str| work.join(format!("{v}.segs.jsonl"));
    let mut produced = vec![PipelineVariant::Full, PipelineVariant::Fw];
    if with_bw {
        produced.push(PipelineVariant::Bw);
    }
    let mut outputs: Vec<(String, PathBuf)> = Vec::new();
    for v in produced {
        let path = seg_path(v.as_str());
        segment(cfg, v, names, work, Some(&path), false)?;
        outputs.push((v.as_str().into(), path));
    }
    let path = seg_path("baseline");
    baseline(cfg, names, Some(&path))?;
    outputs.push(("baseline".into(), path));
    if let Some(gt) = gt {
        let path = seg_path("gs");
        let gs = gridsearch(cfg, names, work, Some(gt), Some(&path))?;
        summary.insert("gs_threshold".into(), gs["threshold"].clone());
        outputs.push(("gs".into(), path));
        let mut scores = serde_json::Map::new();
        for (label, path) in &outputs {
            let report = evaluate(path, gt, false)?;
            scores.insert(
                label.clone(),
                json!({
                    "precision": report["precision"],
                    "recall": report["recall"],
                    "f1": report["f1"],
                }),
            );
        }
        summary.insert("scores".into(), Value::Object(scores));
    }
    let summary = Value::Object(summary);
    write_file(&work.join("summary.json"), to_json_text(&summary).as_bytes())?;
    Ok(summary)
}
