//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! (written straight to stdout so it shows without `--nocapture`) and then
//! asserts. Scenario runs are shared between tests through `OnceLock`s.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensorseg::charlm::{Direction, LanguageModel, LmParams};
use sensorseg::corpus::{load_corpus, load_ground_truth, Corpus, LabeledCorpus, Span};
use sensorseg::ensemble::{ClassifierParams, EnsembleModel};
use sensorseg::eval::{canonicalize_spans, delimiter_baseline, score_corpus, score_name};
use sensorseg::segmenter::{
    decisions_to_spans, full_from_stage, gs_from_stage, run_full, segmentations_to_jsonl, single_from_stage,
    spans_to_decisions, LmStage, PipelineConfig, Segmentation,
};
use sensorseg::synth::{ground_truth_text, names_text, scenario, ScenarioTag};
use sensorseg::thresholds::{Decision, Milli};

const SEED: u64 = 1;
const NAMES: usize = 1000;

fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "[criterion {id}] {} {title}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn labeled(tag: ScenarioTag, count: usize, seed: u64) -> LabeledCorpus {
    let names = scenario(tag, count, seed).unwrap();
    let corpus = load_corpus(names_text(&names).as_bytes()).unwrap();
    let gt = load_ground_truth(ground_truth_text(&names).as_bytes()).unwrap();
    LabeledCorpus::new(corpus, gt).unwrap()
}

fn f1(data: &LabeledCorpus, segs: &[Segmentation]) -> f64 {
    score_corpus(&data.ground_truth, segs).unwrap().f1
}

struct ScenarioRun {
    data: LabeledCorpus,
    full: f64,
    fw: f64,
    fw_threshold: Milli,
    gs: f64,
    gs_threshold: Milli,
    baseline: f64,
}

/// Full, FW and GS share one forward LM.
fn run_scenario(tag: ScenarioTag) -> ScenarioRun {
    let data = labeled(tag, NAMES, SEED);
    let cfg = PipelineConfig::default();
    let stage = LmStage::train(&data.corpus, &cfg.lm, Direction::Forward).unwrap();
    let full = full_from_stage(&data.corpus, &stage, &cfg).unwrap();
    let fw = single_from_stage(&data.corpus, &stage, &cfg.intervals).unwrap();
    let gs = gs_from_stage(&data, &stage).unwrap();
    let baseline = delimiter_baseline(&data.corpus);
    ScenarioRun {
        full: f1(&data, &full.segmentations),
        fw: f1(&data, &fw.segmentations),
        fw_threshold: fw.threshold,
        gs: gs.f1,
        gs_threshold: gs.threshold,
        baseline: f1(&data, &baseline),
        data,
    }
}

fn scenario_run(tag: ScenarioTag) -> &'static ScenarioRun {
    static RUNS: [OnceLock<ScenarioRun>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let k = ScenarioTag::ALL.iter().position(|&t| t == tag).unwrap();
    RUNS[k].get_or_init(|| run_scenario(tag))
}

fn bw_f1(data: &LabeledCorpus) -> f64 {
    let cfg = PipelineConfig::default();
    let reversed = data.corpus.reversed();
    let stage = LmStage::train(&reversed, &cfg.lm, Direction::Backward).unwrap();
    let bw = single_from_stage(&reversed, &stage, &cfg.intervals).unwrap();
    f1(data, &bw.segmentations)
}

fn pts(x: f64) -> f64 {
    100.0 * x
}

// ---------------------------------------------------------------- 1

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn criterion_1_numerical_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let step = 1e-4;

    let mut lm = LmParams::init(6, 3, 5, &mut rng);
    for t in lm.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-0.7..0.7);
        }
    }
    let (a, b) = (vec![0, 2, 5, 1, 3, 4], vec![0, 1, 1, 4, 2, 5]);
    let (ta, tb) = (vec![2, 5, 1, 3, 4, 0], vec![1, 1, 4, 2, 5, 3]);
    let inputs: Vec<&[usize]> = vec![&a, &b];
    let targets: Vec<&[usize]> = vec![&ta, &tb];
    let (_, grads) = lm.loss_and_grad(&inputs, &targets);
    let mut lstm_worst: f64 = 0.0;
    for (t, &size) in lm.tensor_sizes().iter().enumerate() {
        for j in 0..size {
            let mut plus = lm.clone();
            plus.tensors_mut()[t][j] += step;
            let mut minus = lm.clone();
            minus.tensors_mut()[t][j] -= step;
            let numeric =
                (plus.loss_and_grad(&inputs, &targets).0 - minus.loss_and_grad(&inputs, &targets).0) / (2.0 * step);
            lstm_worst = lstm_worst.max(relative_error(numeric, grads.tensors()[t][j]));
        }
    }

    let mlp = ClassifierParams::init(5, &[4, 3], &mut rng);
    let x = ndarray::Array2::from_shape_fn((7, 5), |_| rng.gen_range(-1.5..1.5));
    let y = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
    let (_, mgrads) = mlp.loss_and_grad(x.view(), &y);
    let mut mlp_worst: f64 = 0.0;
    for (t, &size) in mlp.tensor_sizes().iter().enumerate() {
        for j in 0..size {
            let mut plus = mlp.clone();
            plus.tensors_mut()[t][j] += step;
            let mut minus = mlp.clone();
            minus.tensors_mut()[t][j] -= step;
            let numeric = (plus.loss_and_grad(x.view(), &y).0 - minus.loss_and_grad(x.view(), &y).0) / (2.0 * step);
            mlp_worst = mlp_worst.max(relative_error(numeric, mgrads.tensors()[t][j]));
        }
    }

    let corpus = Corpus::from_names(&["SDH.AH1_RHC-4:CTL STPT", "SODH1______L_L", "BLD-VAV_22"]).unwrap();
    let model = LanguageModel {
        vocabulary: corpus.vocabulary().clone(),
        params: LmParams::init(corpus.vocabulary().len(), 8, 12, &mut rng),
        direction: Direction::Forward,
    };
    let mut softmax_worst: f64 = 0.0;
    for n in corpus.names() {
        let pass = model.forward(&n.normalized).unwrap();
        for row in pass.distributions.rows() {
            softmax_worst = softmax_worst.max((row.sum() - 1.0).abs());
        }
    }

    let pass = lstm_worst < 1e-3 && mlp_worst < 1e-3 && softmax_worst < 1e-6;
    report(
        1,
        "numerical soundness",
        pass,
        &format!("LSTM grad rel err {lstm_worst:.2e}, MLP grad rel err {mlp_worst:.2e}, softmax |sum-1| {softmax_worst:.2e}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

/// Segments of a name cut after every position whose bit is set.
fn oracle_segments(name: &[char], cuts: u32) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..name.len() {
        if i + 1 == name.len() || cuts & (1 << i) != 0 {
            out.push((start, i));
            start = i + 1;
        }
    }
    out
}

/// Direct reading of the scoring rules: drop all-underscore segments, strip
/// underscores at both ends, and intersect position sets.
fn oracle_eval_set(name: &[char], cuts: u32) -> BTreeSet<(usize, usize)> {
    oracle_segments(name, cuts)
        .into_iter()
        .filter_map(|(s, e)| {
            let inner: Vec<usize> = (s..=e).filter(|&k| name[k] != '_').collect();
            Some((*inner.first()?, *inner.last()?))
        })
        .collect()
}

fn oracle_scores(gt: &BTreeSet<(usize, usize)>, pred: &BTreeSet<(usize, usize)>) -> (usize, f64, f64, f64) {
    let correct = gt.intersection(pred).count();
    if gt.is_empty() && pred.is_empty() {
        return (0, 1.0, 1.0, 1.0);
    }
    let p = if pred.is_empty() { 0.0 } else { correct as f64 / pred.len() as f64 };
    let r = if gt.is_empty() { 0.0 } else { correct as f64 / gt.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (correct, p, r, f)
}

#[test]
fn criterion_2_oracle_equivalence() {
    let alphabet = ['A', 'B', 'C', '_'];
    let (mut names, mut pairs, mut mismatches, mut identity_failures) = (0usize, 0usize, 0usize, 0usize);
    for len in 1..=6usize {
        for code in 0..4usize.pow(len as u32) {
            let name: Vec<char> = (0..len).map(|k| alphabet[(code / 4usize.pow(k as u32)) % 4]).collect();
            names += 1;
            let masks = 1u32 << (len - 1);
            let mut ours = Vec::with_capacity(masks as usize);
            let mut oracle = Vec::with_capacity(masks as usize);
            for cuts in 0..masks {
                let decisions: Vec<Decision> = (0..len - 1)
                    .map(|i| if cuts & (1 << i) != 0 { Decision::Break } else { Decision::Tie })
                    .collect();
                let spans = decisions_to_spans(&decisions, len).unwrap();
                let expected: Vec<Span> = oracle_segments(&name, cuts).iter().map(|&(s, e)| Span::new(s, e)).collect();
                if spans != expected || spans_to_decisions(&spans, len).unwrap() != decisions {
                    identity_failures += 1;
                }
                ours.push(canonicalize_spans(&spans, &name));
                oracle.push(oracle_eval_set(&name, cuts));
            }
            for g in 0..masks as usize {
                for p in 0..masks as usize {
                    pairs += 1;
                    let got = score_name(&ours[g], &ours[p]);
                    let (_, op, or, of) = oracle_scores(&oracle[g], &oracle[p]);
                    if got.precision != op || got.recall != or || (got.f1 - of).abs() > 1e-12 {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let pass = mismatches == 0 && identity_failures == 0;
    report(
        2,
        "oracle equivalence",
        pass,
        &format!("{names} names, {pairs} GT x prediction pairs, {mismatches} score mismatches, {identity_failures} round-trip failures"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_pipeline_efficacy() {
    let r = scenario_run(ScenarioTag::Standard);
    let pass = r.full >= 0.90 && r.full >= r.fw && r.gs >= r.fw;
    report(
        3,
        "pipeline efficacy on Standard",
        pass,
        &format!("Full {:.4} (>= 0.90), FW {:.4}, GS {:.4}", r.full, r.fw, r.gs),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_padding_separation() {
    let r = scenario_run(ScenarioTag::FixedLengthPadded);
    let gap = pts(r.full - r.baseline);
    let pass = gap >= 20.0;
    report(
        4,
        "padding separation on FixedLengthPadded",
        pass,
        &format!("Full {:.4}, Delimiter {:.4}, gap {gap:.1} points (>= 20)", r.full, r.baseline),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_direction_asymmetry() {
    let r = scenario_run(ScenarioTag::PrefixHeavy);
    let bw = bw_f1(&r.data);
    let gap = pts(r.fw - bw);
    let pass = gap >= 10.0;
    report(
        5,
        "direction asymmetry on PrefixHeavy",
        pass,
        &format!("FW {:.4}, BW {bw:.4}, gap {gap:.1} points (>= 10)", r.fw),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_threshold_fidelity() {
    let mut pass = true;
    let mut parts = Vec::new();
    for tag in ScenarioTag::ALL {
        let r = scenario_run(tag);
        let diff = pts((r.fw - r.gs).abs());
        let ok = diff <= 5.0 || r.fw_threshold == r.gs_threshold;
        pass &= ok;
        parts.push(format!(
            "{} |FW-GS| {diff:.1} pts (t {} vs {}){}",
            tag.as_str(),
            r.fw_threshold,
            r.gs_threshold,
            if ok { "" } else { " FAIL" }
        ));
    }
    report(6, "threshold-selection fidelity", pass, &parts.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_rare_segment_denoising() {
    let r = scenario_run(ScenarioTag::RareSegment);
    let gap = pts(r.full - r.fw);
    let pass = gap >= 5.0;
    report(
        7,
        "rare-segment denoising on RareSegment",
        pass,
        &format!("Full {:.4}, FW {:.4}, gap {gap:.1} points (>= 5)", r.full, r.fw),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_determinism() {
    let data = labeled(ScenarioTag::Standard, 200, 9);
    let mut cfg = PipelineConfig::default();
    cfg.lm.embedding_dim = 16;
    cfg.lm.hidden_dim = 32;
    cfg.lm.epochs = 30;
    cfg.lm.seed = 4;
    cfg.ensemble.members = 12;
    cfg.ensemble.seed = 4;
    let run = || {
        let out = run_full(&data.corpus, &cfg).unwrap();
        (segmentations_to_jsonl(&data.corpus, &out.segmentations).unwrap(), out.ensemble)
    };
    let (first, model) = run();
    let (second, again) = run();
    let identical = first == second && model == again;

    let mut permutation_ok = false;
    if let Some(model) = model {
        let stage = LmStage::train(&data.corpus, &cfg.lm, Direction::Forward).unwrap();
        let hidden = stage.hidden_states().unwrap();
        let base = model.tie_probabilities(hidden.values.view(), &hidden.lm_hash).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        permutation_ok = (0..3).all(|_| {
            let mut members = model.members.clone();
            for k in (1..members.len()).rev() {
                members.swap(k, rng.gen_range(0..=k));
            }
            let shuffled = EnsembleModel {
                members,
                ..model.clone()
            };
            shuffled.tie_probabilities(hidden.values.view(), &hidden.lm_hash).unwrap() == base
        });
    }
    let pass = identical && permutation_ok;
    report(
        8,
        "determinism",
        pass,
        &format!(
            "repeat run byte-identical: {identical} ({} bytes); member-permutation invariant: {permutation_ok}",
            first.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_9_data_size_trend() {
    let full_data = &scenario_run(ScenarioTag::Standard);
    let cfg = PipelineConfig::default();
    let mut scores = Vec::new();
    for count in [NAMES / 4, NAMES / 2, 3 * NAMES / 4] {
        let data = full_data.data.truncated(count).unwrap();
        let out = run_full(&data.corpus, &cfg).unwrap();
        scores.push(f1(&data, &out.segmentations));
    }
    scores.push(full_data.full);
    let drops = scores.windows(2).filter(|w| w[1] < w[0]).count();
    let pass = drops <= 1;
    let shown: Vec<String> = scores.iter().map(|s| format!("{s:.4}")).collect();
    report(
        9,
        "data-size trend on Standard",
        pass,
        &format!("F1 at 25/50/75/100%: {} ({drops} decreasing step(s), <= 1 allowed)", shown.join(" / ")),
    );
    assert!(pass);
}
