//! Synthetic sensor-name corpora with exact ground truth.
//!
//! A scheme is an ordered list of slots. Each present slot contributes one
//! segment drawn from its pool, followed by the slot's delimiter when a later
//! slot is also present. Pool templates expand `#` to a random digit and `@`
//! to a random uppercase letter. An optional padding run brings every name
//! to a fixed length.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{bio_to_spans, ground_truth_line, Bio, Span};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoolItem {
    pub template: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Slot {
    pub name: String,
    pub pool: Vec<PoolItem>,
    /// chance the slot appears at all
    pub presence: f64,
    /// emitted after the segment when a later slot is present
    pub delimiter: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Padding {
    pub length: usize,
    pub ch: char,
    /// index of the slot the run follows (after its delimiter)
    pub after: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamingScheme {
    pub slots: Vec<Slot>,
    pub padding: Option<Padding>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PieceKind {
    Segment(usize),
    Delimiter,
    Padding,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Piece {
    pub kind: PieceKind,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedName {
    pub name: String,
    pub tags: Vec<Bio>,
    /// how the name was assembled, piece by piece
    pub trace: Vec<Piece>,
}

impl GeneratedName {
    pub fn spans(&self) -> Vec<Span> {
        bio_to_spans(&self.tags)
    }
}

fn template_len(t: &str) -> usize {
    t.chars().count()
}

impl NamingScheme {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scheme(m));
        if self.slots.is_empty() {
            return bad("scheme has no slots".into());
        }
        for s in &self.slots {
            if s.pool.is_empty() {
                return bad(format!("slot {} has an empty pool", s.name));
            }
            if s.pool.iter().any(|p| p.template.is_empty()) {
                return bad(format!("slot {} has an empty item", s.name));
            }
            if s.pool.iter().any(|p| !(p.weight > 0.0 && p.weight.is_finite())) {
                return bad(format!("slot {} has a non-positive weight", s.name));
            }
            if !(0.0..=1.0).contains(&s.presence) {
                return bad(format!("slot {} presence {} outside [0, 1]", s.name, s.presence));
            }
            if s.pool.iter().any(|p| template_chars_are_delimiters(&p.template)) {
                return bad(format!("slot {} has an item without alphanumerics", s.name));
            }
            if s.delimiter.chars().any(|c| c.is_alphanumeric()) {
                return bad(format!("slot {} delimiter {:?} is alphanumeric", s.name, s.delimiter));
            }
        }
        if !self.slots.iter().any(|s| s.presence > 0.0) {
            return bad("no slot can ever appear".into());
        }
        if let Some(p) = &self.padding {
            if p.after >= self.slots.len() {
                return bad(format!("padding follows slot {} but there are {}", p.after, self.slots.len()));
            }
            if p.ch.is_alphanumeric() {
                return bad(format!("padding character {:?} is alphanumeric", p.ch));
            }
            let (_, longest) = self.length_range();
            if longest > p.length {
                return bad(format!(
                    "fixed length {} is shorter than the longest possible name ({longest})",
                    p.length
                ));
            }
        }
        Ok(())
    }

    /// Bounds on the number of segments per name.
    pub fn segment_range(&self) -> (usize, usize) {
        let required = self.slots.iter().filter(|s| s.presence >= 1.0).count();
        let possible = self.slots.iter().filter(|s| s.presence > 0.0).count();
        (required.max(1), possible)
    }

    /// Bounds on name length before padding.
    pub fn length_range(&self) -> (usize, usize) {
        let present: Vec<&Slot> = self.slots.iter().filter(|s| s.presence > 0.0).collect();
        let longest: usize = present
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let item = s.pool.iter().map(|p| template_len(&p.template)).max().unwrap_or(0);
                let delim = if k + 1 < present.len() { template_len(&s.delimiter) } else { 0 };
                item + delim
            })
            .sum();
        let shortest_item = |s: &Slot| s.pool.iter().map(|p| template_len(&p.template)).min().unwrap_or(0);
        let required: Vec<&Slot> = self.slots.iter().filter(|s| s.presence >= 1.0).collect();
        let shortest = if required.is_empty() {
            present.iter().map(|s| shortest_item(s)).min().unwrap_or(0)
        } else {
            // delimiters only counted between required slots
            required.iter().map(|s| shortest_item(s)).sum::<usize>()
                + required[..required.len() - 1]
                    .iter()
                    .map(|s| template_len(&s.delimiter))
                    .sum::<usize>()
        };
        (shortest, longest)
    }

    pub fn generate(&self, count: usize) -> Result<Vec<GeneratedName>> {
        if count == 0 {
            return Err(Error::Scheme("count must be at least 1".into()));
        }
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pickers: Vec<WeightedIndex<f64>> = self
            .slots
            .iter()
            .map(|s| WeightedIndex::new(s.pool.iter().map(|p| p.weight)).expect("weights validated"))
            .collect();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let present: Vec<usize> = (0..self.slots.len())
                .filter(|&k| rng.gen_bool(self.slots[k].presence))
                .collect();
            if present.is_empty() {
                continue;
            }
            let mut trace = Vec::new();
            for (j, &k) in present.iter().enumerate() {
                let slot = &self.slots[k];
                let item = &slot.pool[pickers[k].sample(&mut rng)];
                trace.push(Piece {
                    kind: PieceKind::Segment(k),
                    text: expand(&item.template, &mut rng),
                });
                if j + 1 < present.len() && !slot.delimiter.is_empty() {
                    trace.push(Piece {
                        kind: PieceKind::Delimiter,
                        text: slot.delimiter.clone(),
                    });
                }
            }
            if let Some(p) = &self.padding {
                let used: usize = trace.iter().map(|t| template_len(&t.text)).sum();
                let run = p.length - used;
                if run > 0 {
                    // after the chosen slot, or the last present slot before it
                    let anchor = present.iter().rposition(|&k| k <= p.after);
                    let mut at = 0;
                    if let Some(a) = anchor {
                        let seg = trace
                            .iter()
                            .position(|t| t.kind == PieceKind::Segment(present[a]))
                            .expect("present slot traced");
                        at = seg + 1;
                        if trace.get(at).is_some_and(|t| t.kind == PieceKind::Delimiter) {
                            at += 1;
                        }
                    }
                    trace.insert(
                        at,
                        Piece {
                            kind: PieceKind::Padding,
                            text: std::iter::repeat_n(p.ch, run).collect(),
                        },
                    );
                }
            }
            out.push(assemble(trace));
        }
        Ok(out)
    }
}

fn template_chars_are_delimiters(t: &str) -> bool {
    t.chars().all(|c| !(c.is_alphanumeric() || c == '#' || c == '@'))
}

fn expand(template: &str, rng: &mut ChaCha8Rng) -> String {
    template
        .chars()
        .map(|c| match c {
            '#' => char::from(b'0' + rng.gen_range(0..10u8)),
            '@' => char::from(b'A' + rng.gen_range(0..26u8)),
            c => c,
        })
        .collect()
}

fn assemble(trace: Vec<Piece>) -> GeneratedName {
    let mut name = String::new();
    let mut tags = Vec::new();
    for piece in &trace {
        name.push_str(&piece.text);
        match piece.kind {
            PieceKind::Segment(_) => {
                tags.push(Bio::B);
                tags.extend(std::iter::repeat_n(Bio::I, template_len(&piece.text) - 1));
            }
            PieceKind::Delimiter | PieceKind::Padding => {
                tags.extend(std::iter::repeat_n(Bio::O, template_len(&piece.text)));
            }
        }
    }
    GeneratedName { name, tags, trace }
}

/// Spans recovered from the trace alone.
pub fn trace_spans(trace: &[Piece]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut at = 0;
    for p in trace {
        let n = template_len(&p.text);
        if matches!(p.kind, PieceKind::Segment(_)) {
            spans.push(Span::new(at, at + n - 1));
        }
        at += n;
    }
    spans
}

/// `names.txt` content: one raw name per line.
pub fn names_text(names: &[GeneratedName]) -> String {
    let mut out = String::new();
    for n in names {
        let _ = writeln!(out, "{}", n.name);
    }
    out
}

/// `gt.jsonl` content.
pub fn ground_truth_text(names: &[GeneratedName]) -> String {
    let mut out = String::new();
    for n in names {
        out.push_str(&ground_truth_line(&n.name, &n.tags));
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ScenarioTag {
    Standard,
    FixedLengthPadded,
    PrefixHeavy,
    RareSegment,
}

impl ScenarioTag {
    pub const ALL: [ScenarioTag; 4] = [
        ScenarioTag::Standard,
        ScenarioTag::FixedLengthPadded,
        ScenarioTag::PrefixHeavy,
        ScenarioTag::RareSegment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::Standard => "standard",
            ScenarioTag::FixedLengthPadded => "fixed-length-padded",
            ScenarioTag::PrefixHeavy => "prefix-heavy",
            ScenarioTag::RareSegment => "rare-segment",
        }
    }

    pub fn scheme(self, seed: u64) -> NamingScheme {
        let slots = match self {
            ScenarioTag::Standard => standard_slots(),
            ScenarioTag::FixedLengthPadded => padded_slots(),
            ScenarioTag::PrefixHeavy => prefix_heavy_slots(),
            ScenarioTag::RareSegment => rare_segment_slots(),
        };
        let padding = (self == ScenarioTag::FixedLengthPadded).then_some(Padding {
            length: 14,
            ch: '_',
            after: 1,
        });
        NamingScheme { slots, padding, seed }
    }
}

impl std::str::FromStr for ScenarioTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_ascii_lowercase();
        ScenarioTag::ALL
            .into_iter()
            .find(|t| t.as_str().replace('-', "") == key)
            .ok_or_else(|| Error::Scheme(format!("unknown scenario {s:?}")))
    }
}

pub fn scenario(tag: ScenarioTag, count: usize, seed: u64) -> Result<Vec<GeneratedName>> {
    tag.scheme(seed).generate(count)
}

fn slot(name: &str, items: &[(&str, f64)], presence: f64, delimiter: &str) -> Slot {
    Slot {
        name: name.into(),
        pool: items
            .iter()
            .map(|&(t, w)| PoolItem {
                template: t.into(),
                weight: w,
            })
            .collect(),
        presence,
        delimiter: delimiter.into(),
    }
}

fn uniform<'a>(items: &[&'a str]) -> Vec<(&'a str, f64)> {
    items.iter().map(|&t| (t, 1.0)).collect()
}

/// Building, equipment, optional room, point type, with mixed delimiters.
fn standard_slots() -> Vec<Slot> {
    vec![
        slot("building", &uniform(&["SDH", "EBU", "BLD", "KTR", "MPH", "OAK"]), 1.0, "."),
        slot(
            "equipment",
            &uniform(&[
                "AH#", "BLR#", "CH#", "DOAS#", "EF#", "FCU##", "GEN#", "HX#", "IDF#", "JCI#", "KEF#", "LTG#", "MAU#",
                "NAE#", "OAU#", "PMP#", "QSU#", "RTU#", "SF#", "TU##", "UH#", "VAV#", "WSHP#", "XFMR#",
            ]),
            1.0,
            "_",
        ),
        slot("room", &uniform(&["RM###", "R##"]), 0.5, "-"),
        slot(
            "point",
            &uniform(&[
                "ALRM", "BYPS", "CTL STPT", "DAT", "EFFSP", "FLOW", "GAS", "HUM", "ISO", "JAM", "KW", "LEV", "MAT",
                "NPT", "OCC", "PRS", "QTY", "RAT", "SAT", "TEMP", "UNOC", "VLV", "WTR", "ZNT",
            ]),
            1.0,
            "",
        ),
    ]
}

/// Fixed length 14 with an underscore run; the point names carry interior
/// underscores so delimiter splitting breaks them apart.
fn padded_slots() -> Vec<Slot> {
    vec![
        slot("building", &uniform(&["SOD"]), 1.0, ""),
        slot(
            "equipment",
            &uniform(&["H#", "C#", "P##", "B#", "D#", "E##", "F#", "K#", "M#", "N##", "T#", "V#"]),
            1.0,
            "",
        ),
        slot(
            "point",
            &uniform(&[
                "L_L", "S_T", "R_H", "K_W", "A_V", "T_S", "N_V", "W_B", "HC_V", "ZN_T", "PR_S", "DA_T", "OC_C", "CO_2",
                "F_L_O", "M_A_X",
            ]),
            1.0,
            "",
        ),
    ]
}

/// One shared equipment/room prefix and a varied suffix: reading forward the
/// boundaries follow the prefix, reading backward they fall inside it.
fn prefix_heavy_slots() -> Vec<Slot> {
    vec![
        slot("building", &uniform(&["SOD"]), 1.0, ""),
        slot("equipment", &uniform(&["A#", "B#", "C#", "H#", "V#"]), 1.0, ""),
        slot("room", &uniform(&["R###", "Z###", "L###", "N###"]), 1.0, "__"),
        slot(
            "point",
            &uniform(&[
                "ASO", "VAV", "ZNT", "DMP", "HTG", "CLG", "OCC", "STP", "FLW", "RHT", "MXT", "EFF",
            ]),
            1.0,
            "",
        ),
    ]
}

/// Floor, service type and a varied location tail. Both the floor suffix and
/// the service type have a minority variant: mezzanine floors are a quarter
/// of all floors, and the minority service occurs half as often as the
/// majority one.
fn rare_segment_slots() -> Vec<Slot> {
    vec![
        slot("floor", &[("#F", 3.0), ("#M", 1.0)], 1.0, "_"),
        slot("service", &[("SRVC", 177.0), ("LGHT", 89.0)], 0.6, "_"),
        slot(
            "location",
            &uniform(&[
                "ATRIUM", "BAY#", "COFFEEDOCK", "D#D#D#D##", "EXIT", "FRONTAISLE", "GYM", "HALL", "ISLE#", "JANITOR",
                "KWH", "LHS", "MTR#", "NORTH", "OFFICE#", "PNL##", "QR###_###", "RHS", "STAIR#", "TOILET", "UPS#",
                "VESTIBULE", "WEST", "ZONE#",
            ]),
            1.0,
            "",
        ),
    ]
}

/// Parses the plain-text scheme format (see README):
///
/// ```text
/// seed = 7
/// slots = building, equipment, point
/// building.pool = SDH, EBU
/// building.weights = 2, 1
/// building.presence = 1.0
/// building.delimiter = "."
/// pad.length = 14
/// pad.char = _
/// pad.after = equipment
/// ```
pub fn parse_scheme(text: &str) -> Result<NamingScheme> {
    use std::collections::BTreeMap;
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") || line.starts_with(';') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Scheme(format!("line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().to_string();
        if kv.insert(key.clone(), (lineno + 1, v.trim().to_string())).is_some() {
            return Err(Error::Scheme(format!("line {}: duplicate key {key}", lineno + 1)));
        }
    }
    let mut take = |key: &str| kv.remove(key).map(|(_, v)| v);
    let seed = match take("seed") {
        Some(v) => v.parse().map_err(|_| Error::Scheme(format!("bad seed {v:?}")))?,
        None => 0,
    };
    let names = take("slots").ok_or_else(|| Error::Scheme("missing key: slots".into()))?;
    let names: Vec<String> = split_list(&names);
    let mut slots = Vec::new();
    for name in &names {
        let pool = take(&format!("{name}.pool")).ok_or_else(|| Error::Scheme(format!("missing key: {name}.pool")))?;
        let items = split_list(&pool);
        let weights = match take(&format!("{name}.weights")) {
            Some(w) => {
                let ws = split_list(&w)
                    .iter()
                    .map(|x| x.parse::<f64>().map_err(|_| Error::Scheme(format!("{name}.weights: bad number {x:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                if ws.len() != items.len() {
                    return Err(Error::Scheme(format!(
                        "{name}.weights has {} entries for {} pool items",
                        ws.len(),
                        items.len()
                    )));
                }
                ws
            }
            None => vec![1.0; items.len()],
        };
        let presence = match take(&format!("{name}.presence")) {
            Some(v) => v.parse().map_err(|_| Error::Scheme(format!("{name}.presence: bad number {v:?}")))?,
            None => 1.0,
        };
        let delimiter = take(&format!("{name}.delimiter")).map(|d| unquote(&d)).unwrap_or_default();
        slots.push(Slot {
            name: name.clone(),
            pool: items
                .into_iter()
                .zip(weights)
                .map(|(template, weight)| PoolItem { template, weight })
                .collect(),
            presence,
            delimiter,
        });
    }
    let padding = match take("pad.length") {
        Some(len) => {
            let length = len.parse().map_err(|_| Error::Scheme(format!("pad.length: bad number {len:?}")))?;
            let ch_text = take("pad.char").map(|c| unquote(&c)).unwrap_or_else(|| "_".into());
            let mut chars = ch_text.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(Error::Scheme(format!("pad.char must be one character, got {ch_text:?}"))),
            };
            let after_name = take("pad.after").ok_or_else(|| Error::Scheme("missing key: pad.after".into()))?;
            let after = names
                .iter()
                .position(|n| *n == after_name)
                .ok_or_else(|| Error::Scheme(format!("pad.after names unknown slot {after_name:?}")))?;
            Some(Padding { length, ch, after })
        }
        None => None,
    };
    if let Some((key, (line, _))) = kv.into_iter().next() {
        return Err(Error::Scheme(format!("line {line}: unknown key {key}")));
    }
    let scheme = NamingScheme { slots, padding, seed };
    scheme.validate()?;
    Ok(scheme)
}

fn unquote(v: &str) -> String {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        v[1..v.len() - 1].to_string()
    } else {
        v.to_string()
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(unquote).filter(|s| !s.is_empty()).collect()
}

/// Scheme file text for a scheme; [`parse_scheme`] reads it back.
pub fn scheme_to_text(scheme: &NamingScheme) -> String {
    let q = |s: &str| format!("\"{s}\"");
    let mut out = String::new();
    let _ = writeln!(out, "seed = {}", scheme.seed);
    let names: Vec<&str> = scheme.slots.iter().map(|s| s.name.as_str()).collect();
    let _ = writeln!(out, "slots = {}", names.join(", "));
    for s in &scheme.slots {
        let items: Vec<String> = s.pool.iter().map(|p| q(&p.template)).collect();
        let weights: Vec<String> = s.pool.iter().map(|p| p.weight.to_string()).collect();
        let _ = writeln!(out, "{}.pool = {}", s.name, items.join(", "));
        let _ = writeln!(out, "{}.weights = {}", s.name, weights.join(", "));
        let _ = writeln!(out, "{}.presence = {}", s.name, s.presence);
        let _ = writeln!(out, "{}.delimiter = {}", s.name, q(&s.delimiter));
    }
    if let Some(p) = &scheme.padding {
        let _ = writeln!(out, "pad.length = {}", p.length);
        let _ = writeln!(out, "pad.char = {}", q(&p.ch.to_string()));
        let _ = writeln!(out, "pad.after = {}", scheme.slots[p.after].name);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_ground_truth, parse_bio};

    #[test]
    fn standard_has_three_or_four_segments() {
        let names = scenario(ScenarioTag::Standard, 1000, 1).unwrap();
        assert_eq!(names.len(), 1000);
        for n in &names {
            let k = n.spans().len();
            assert!((3..=4).contains(&k), "{} has {k} segments", n.name);
            assert_eq!(n.spans(), trace_spans(&n.trace));
        }
    }

    #[test]
    fn padded_names_share_length() {
        let names = scenario(ScenarioTag::FixedLengthPadded, 300, 2).unwrap();
        assert!(names.iter().all(|n| n.name.chars().count() == 14));
        assert!(names.iter().any(|n| n.name.contains("______")));
    }

    #[test]
    fn prefix_heavy_shape() {
        let names = scenario(ScenarioTag::PrefixHeavy, 200, 3).unwrap();
        for n in &names {
            assert!(n.name.starts_with("SOD"), "{}", n.name);
            assert!(n.name.contains("__"));
        }
    }

    #[test]
    fn rare_segment_ratio() {
        let names = scenario(ScenarioTag::RareSegment, 3000, 4).unwrap();
        let srvc = names.iter().filter(|n| n.name.contains("_SRVC_")).count() as f64;
        let lght = names.iter().filter(|n| n.name.contains("_LGHT_")).count() as f64;
        assert!((lght / srvc - 89.0 / 177.0).abs() < 0.06, "{lght} / {srvc}");
    }

    #[test]
    fn generation_is_deterministic() {
        let scheme = ScenarioTag::Standard.scheme(11);
        let a = scheme.generate(200).unwrap();
        let b = scheme.generate(200).unwrap();
        assert_eq!(names_text(&a), names_text(&b));
        assert_eq!(ground_truth_text(&a), ground_truth_text(&b));
        assert_ne!(names_text(&a), names_text(&ScenarioTag::Standard.scheme(12).generate(200).unwrap()));
    }

    #[test]
    fn scheme_errors() {
        let s = ScenarioTag::Standard.scheme(0);
        assert!(matches!(s.generate(0), Err(Error::Scheme(_))));
        let mut p = ScenarioTag::FixedLengthPadded.scheme(0);
        p.padding.as_mut().unwrap().length = 5;
        assert!(matches!(p.generate(10), Err(Error::Scheme(_))));
        let mut e = ScenarioTag::Standard.scheme(0);
        e.slots[0].pool.clear();
        assert!(matches!(e.generate(10), Err(Error::Scheme(_))));
    }

    #[test]
    fn emitted_files_load_back() {
        let names = scenario(ScenarioTag::FixedLengthPadded, 50, 5).unwrap();
        let gt = load_ground_truth(ground_truth_text(&names).as_bytes()).unwrap();
        assert_eq!(gt.len(), 50);
        for (k, n) in names.iter().enumerate() {
            assert_eq!(gt[&k].name, n.name);
            assert_eq!(gt[&k].tags, n.tags);
        }
        let corpus = crate::corpus::load_corpus(names_text(&names).as_bytes()).unwrap();
        assert_eq!(corpus.len(), 50);
    }

    #[test]
    fn scheme_file_round_trip() {
        for tag in ScenarioTag::ALL {
            let s = tag.scheme(9);
            assert_eq!(parse_scheme(&scheme_to_text(&s)).unwrap(), s, "{tag:?}");
        }
        let text = "slots = a, b\na.pool = X#, Y\na.delimiter = \" \"\nb.pool = \"Q_Q\"\nb.presence = 0.5\n";
        let s = parse_scheme(text).unwrap();
        assert_eq!(s.slots[0].delimiter, " ");
        assert_eq!(s.slots[1].pool[0].template, "Q_Q");
        assert!(parse_scheme("slots = a\n").is_err());
        assert!(parse_scheme("slots = a\na.pool = X\nbogus = 1\n").is_err());
        assert!(parse_scheme("slots = a\na.pool = X, Y\na.weights = 1\n").is_err());
    }

    #[test]
    fn tags_parse() {
        assert_eq!("prefix-heavy".parse::<ScenarioTag>().unwrap(), ScenarioTag::PrefixHeavy);
        assert_eq!("RareSegment".parse::<ScenarioTag>().unwrap(), ScenarioTag::RareSegment);
        assert!("nope".parse::<ScenarioTag>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn generated_ground_truth_is_consistent(seed in 0u64..10_000, tag in 0usize..4, count in 1usize..40) {
                let scheme = ScenarioTag::ALL[tag].scheme(seed);
                let (min_seg, max_seg) = scheme.segment_range();
                let (min_len, max_len) = scheme.length_range();
                for n in scheme.generate(count).unwrap() {
                    let tags = parse_bio(&crate::corpus::tags_to_string(&n.tags)).unwrap();
                    prop_assert_eq!(tags.len(), n.name.chars().count());
                    prop_assert_eq!(n.spans(), trace_spans(&n.trace));
                    let k = n.spans().len();
                    prop_assert!(k >= min_seg && k <= max_seg);
                    let len = n.name.chars().count();
                    match &scheme.padding {
                        Some(p) => prop_assert_eq!(len, p.length),
                        None => prop_assert!(len >= min_len && len <= max_len),
                    }
                }
            }
        }
    }
}
