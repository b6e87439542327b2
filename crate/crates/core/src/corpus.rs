//! Sensor-name corpora, ground-truth annotations and the character vocabulary.
//!
//! Names are sequences of Unicode scalar values. Only ASCII digits are folded
//! (to `'0'`); everything else, including punctuation and whitespace, is kept
//! as-is so the language model can learn what each delimiter means locally.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A delimiter is any non-alphanumeric character.
pub fn is_delimiter(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Fold every ASCII digit to `'0'`.
pub fn normalize(raw: &str) -> Result<String> {
    if raw.is_empty() {
        return Err(Error::InvalidName("empty name".into()));
    }
    Ok(raw
        .chars()
        .map(|c| if c.is_ascii_digit() { '0' } else { c })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorName {
    pub id: usize,
    pub raw: Vec<char>,
    pub normalized: Vec<char>,
}

impl SensorName {
    pub fn new(id: usize, raw: &str) -> Result<Self> {
        let normalized = normalize(raw)?;
        Ok(Self {
            id,
            raw: raw.chars().collect(),
            normalized: normalized.chars().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }

    pub fn raw_string(&self) -> String {
        self.raw.iter().collect()
    }

    pub fn normalized_string(&self) -> String {
        self.normalized.iter().collect()
    }

    /// Same name read right to left.
    pub fn reversed(&self) -> Self {
        Self {
            id: self.id,
            raw: self.raw.iter().rev().copied().collect(),
            normalized: self.normalized.iter().rev().copied().collect(),
        }
    }
}

/// Bijection between corpus characters and integer ids.
///
/// Id 0 is reserved for the start-of-name symbol, which is not a character
/// and therefore can never collide with anything in a name. Corpus characters
/// take ids `1..=n` in code-point order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    pub const START: usize = 0;

    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        let symbols: Vec<char> = set.into_iter().collect();
        let index = symbols.iter().enumerate().map(|(k, &c)| (c, k + 1)).collect();
        Self { symbols, index }
    }

    /// Number of ids, including the start symbol.
    pub fn len(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    /// `None` for the start symbol and out-of-range ids.
    pub fn symbol(&self, id: usize) -> Option<char> {
        id.checked_sub(1).and_then(|k| self.symbols.get(k).copied())
    }

    /// Characters in id order (id 1 first).
    pub fn chars(&self) -> &[char] {
        &self.symbols
    }

    pub fn encode(&self, chars: &[char]) -> Result<Vec<usize>> {
        chars
            .iter()
            .map(|&c| self.id(c).ok_or(Error::UnknownSymbol(c)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bio {
    B,
    I,
    O,
}

impl Bio {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'B' => Some(Bio::B),
            'I' => Some(Bio::I),
            'O' => Some(Bio::O),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Bio::B => 'B',
            Bio::I => 'I',
            Bio::O => 'O',
        }
    }
}

/// Inclusive character span `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of this span in the same name read backwards.
    pub fn mirrored(&self, name_len: usize) -> Self {
        Self::new(name_len - 1 - self.end, name_len - 1 - self.start)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

pub fn tags_to_string(tags: &[Bio]) -> String {
    tags.iter().map(|t| t.as_char()).collect()
}

/// Parse and validate a BIO string: only `B`, `I`, `O`; `I` never opens the
/// sequence and never follows `O`.
pub fn parse_bio(tags: &str) -> Result<Vec<Bio>> {
    let invalid = |reason: String| Error::InvalidBio {
        tags: tags.to_string(),
        reason,
    };
    let mut out = Vec::with_capacity(tags.len());
    let mut prev: Option<Bio> = None;
    for (k, c) in tags.chars().enumerate() {
        let tag = Bio::from_char(c).ok_or_else(|| invalid(format!("illegal tag {c:?} at {k}")))?;
        if tag == Bio::I && matches!(prev, None | Some(Bio::O)) {
            return Err(invalid(format!("I tag at {k} does not continue a segment")));
        }
        out.push(tag);
        prev = Some(tag);
    }
    Ok(out)
}

/// Maximal `B I*` runs. Assumes a validated sequence.
pub fn bio_to_spans(tags: &[Bio]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (k, tag) in tags.iter().enumerate() {
        match tag {
            Bio::B => {
                if let Some(s) = open.take() {
                    spans.push(Span::new(s, k - 1));
                }
                open = Some(k);
            }
            Bio::I => {}
            Bio::O => {
                if let Some(s) = open.take() {
                    spans.push(Span::new(s, k - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(Span::new(s, tags.len() - 1));
    }
    spans
}

/// Inverse of [`bio_to_spans`]: positions outside every span are `O`.
pub fn spans_to_bio(spans: &[Span], len: usize) -> Vec<Bio> {
    let mut tags = vec![Bio::O; len];
    for span in spans {
        tags[span.start] = Bio::B;
        for tag in &mut tags[span.start + 1..=span.end] {
            *tag = Bio::I;
        }
    }
    tags
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub id: usize,
    /// Raw name the tags were written against.
    pub name: String,
    pub tags: Vec<Bio>,
}

impl GroundTruth {
    pub fn new(id: usize, name: &str, tags: &str) -> Result<Self> {
        let tags = parse_bio(tags)?;
        let name_len = name.chars().count();
        if name_len != tags.len() {
            return Err(Error::LabelLength {
                name: name.to_string(),
                name_len,
                tag_len: tags.len(),
            });
        }
        Ok(Self {
            id,
            name: name.to_string(),
            tags,
        })
    }

    pub fn spans(&self) -> Vec<Span> {
        bio_to_spans(&self.tags)
    }

    /// Tags for the name read backwards; spans map to mirrored ranges and the
    /// B/I roles are recomputed from them.
    pub fn reversed(&self) -> Self {
        let n = self.tags.len();
        let mut spans: Vec<Span> = self.spans().iter().map(|s| s.mirrored(n)).collect();
        spans.sort();
        Self {
            id: self.id,
            name: self.name.chars().rev().collect(),
            tags: spans_to_bio(&spans, n),
        }
    }
}

/// Id-keyed ground truth.
pub type GroundTruthSet = BTreeMap<usize, GroundTruth>;

#[derive(Debug, Deserialize)]
struct GroundTruthRecord {
    #[serde(default)]
    id: Option<usize>,
    name: String,
    bio: String,
}

#[derive(Serialize)]
struct GroundTruthRecordOut<'a> {
    name: &'a str,
    bio: String,
}

/// Read JSON-lines `{"name": .., "bio": ..}` records. Ids come from an
/// optional `"id"` field, otherwise from record order (first record is 0),
/// which lines them up with [`load_corpus`] on the matching names file.
pub fn load_ground_truth<R: BufRead>(source: R) -> Result<GroundTruthSet> {
    let mut out = BTreeMap::new();
    let mut ordinal = 0usize;
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GroundTruthRecord = serde_json::from_str(&line)?;
        let id = record.id.unwrap_or(ordinal);
        ordinal += 1;
        let gt = GroundTruth::new(id, &record.name, &record.bio)?;
        if out.insert(id, gt).is_some() {
            return Err(Error::Format(format!("duplicate ground-truth id {id}")));
        }
    }
    Ok(out)
}

pub fn ground_truth_line(name: &str, tags: &[Bio]) -> String {
    serde_json::to_string(&GroundTruthRecordOut {
        name,
        bio: tags_to_string(tags),
    })
    .expect("ground truth record serializes")
}

/// An immutable set of names with their vocabulary. Carries no labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    names: Vec<SensorName>,
    vocabulary: Vocabulary,
}

impl Corpus {
    /// Ids are assigned in order, starting at 0.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names = names
            .iter()
            .enumerate()
            .map(|(id, raw)| SensorName::new(id, raw.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_sensor_names(names)
    }

    pub fn from_sensor_names(names: Vec<SensorName>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.id) {
                return Err(Error::Format(format!("duplicate name id {}", n.id)));
            }
        }
        let vocabulary = Vocabulary::from_chars(names.iter().flat_map(|n| n.normalized.iter().copied()));
        Ok(Self { names, vocabulary })
    }

    pub fn names(&self) -> &[SensorName] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn get(&self, id: usize) -> Option<&SensorName> {
        self.names.iter().find(|n| n.id == id)
    }

    pub fn reversed(&self) -> Self {
        Self {
            names: self.names.iter().map(SensorName::reversed).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    /// Keep the first `count` names (ids unchanged).
    pub fn truncated(&self, count: usize) -> Result<Self> {
        Self::from_sensor_names(self.names.iter().take(count).cloned().collect())
    }
}

/// One raw name per line; empty lines are skipped, everything else is kept
/// verbatim (minus the line terminator), duplicates included.
pub fn load_corpus<R: BufRead>(source: R) -> Result<Corpus> {
    let mut names = Vec::new();
    for line in source.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        names.push(line);
    }
    if names.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::from_names(&names)
}

/// A corpus paired with annotations for (a subset of) its names.
#[derive(Clone, Debug)]
pub struct LabeledCorpus {
    pub corpus: Corpus,
    pub ground_truth: GroundTruthSet,
}

impl LabeledCorpus {
    /// Checks that every annotated id exists and that its raw name matches.
    pub fn new(corpus: Corpus, ground_truth: GroundTruthSet) -> Result<Self> {
        for (id, gt) in &ground_truth {
            let name = corpus.get(*id).ok_or(Error::MissingLabel(*id))?;
            if name.raw_string() != gt.name {
                return Err(Error::Format(format!(
                    "ground truth for id {id} is for {:?}, corpus has {:?}",
                    gt.name,
                    name.raw_string()
                )));
            }
        }
        Ok(Self {
            corpus,
            ground_truth,
        })
    }

    pub fn reversed(&self) -> Self {
        Self {
            corpus: self.corpus.reversed(),
            ground_truth: self
                .ground_truth
                .iter()
                .map(|(id, gt)| (*id, gt.reversed()))
                .collect(),
        }
    }

    pub fn truncated(&self, count: usize) -> Result<Self> {
        let corpus = self.corpus.truncated(count)?;
        let ground_truth = self
            .ground_truth
            .iter()
            .filter(|(id, _)| corpus.get(**id).is_some())
            .map(|(id, gt)| (*id, gt.clone()))
            .collect();
        Ok(Self {
            corpus,
            ground_truth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_folds_digits_only() {
        assert_eq!(normalize("SODA4R731__ASO").unwrap(), "SODA0R000__ASO");
        assert_eq!(normalize("ABC").unwrap(), "ABC");
        assert_eq!(
            normalize("1F_FCU10_11_13_23_COLLAB").unwrap(),
            "0F_FCU00_00_00_00_COLLAB"
        );
        assert!(matches!(normalize(""), Err(Error::InvalidName(_))));
    }

    #[test]
    fn non_ascii_digits_are_not_folded() {
        assert_eq!(normalize("A٣").unwrap(), "A٣");
    }

    #[test]
    fn load_two_names() {
        let c = load_corpus("AB\nAC".as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.vocabulary().len(), 4);
        assert_eq!(c.vocabulary().chars(), &['A', 'B', 'C']);
    }

    #[test]
    fn load_skips_blank_lines_keeps_interior_whitespace() {
        let c = load_corpus("AB\n\n\nC D\r\n\nE\n".as_bytes()).unwrap();
        let raw: Vec<String> = c.names().iter().map(|n| n.raw_string()).collect();
        assert_eq!(raw, vec!["AB", "C D", "E"]);
    }

    #[test]
    fn duplicate_normalized_names_stay_distinct() {
        let c = load_corpus("A1\nA2".as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.names()[0].normalized_string(), "A0");
        assert_eq!(c.names()[1].normalized_string(), "A0");
        assert_ne!(c.names()[0].id, c.names()[1].id);
    }

    #[test]
    fn empty_stream_is_rejected() {
        assert!(matches!(load_corpus("\n\n".as_bytes()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn ground_truth_spans_for_worked_example() {
        let gt = GroundTruth::new(0, "SODA0R000__ASO", "BIIBIBIIIOOBII").unwrap();
        let name: Vec<char> = gt.name.chars().collect();
        let segs: Vec<String> = gt
            .spans()
            .iter()
            .map(|s| name[s.start..=s.end].iter().collect())
            .collect();
        assert_eq!(segs, vec!["SOD", "A0", "R000", "ASO"]);
    }

    #[test]
    fn single_segment_and_invalid_bio() {
        let gt = GroundTruth::new(0, "ABC", "BII").unwrap();
        assert_eq!(gt.spans(), vec![Span::new(0, 2)]);
        assert!(matches!(
            GroundTruth::new(0, "ABC", "IBB"),
            Err(Error::InvalidBio { .. })
        ));
        assert!(matches!(
            GroundTruth::new(0, "ABC", "BOI"),
            Err(Error::InvalidBio { .. })
        ));
        assert!(matches!(
            GroundTruth::new(0, "ABC", "BI"),
            Err(Error::LabelLength { .. })
        ));
    }

    #[test]
    fn load_ground_truth_jsonl() {
        let src = r#"{"name": "AB_C", "bio": "BIOB"}
{"name": "A1", "bio": "BB"}
"#;
        let gt = load_ground_truth(src.as_bytes()).unwrap();
        assert_eq!(gt.len(), 2);
        assert_eq!(gt[&0].spans(), vec![Span::new(0, 1), Span::new(3, 3)]);
        assert_eq!(gt[&1].name, "A1");
        let bad = r#"{"name": "AB", "bio": "B"}"#;
        assert!(matches!(
            load_ground_truth(bad.as_bytes()),
            Err(Error::LabelLength { .. })
        ));
    }

    #[test]
    fn labeled_corpus_checks_names() {
        let c = Corpus::from_names(&["AB", "CD"]).unwrap();
        let mut gt = GroundTruthSet::new();
        gt.insert(1, GroundTruth::new(1, "CD", "BI").unwrap());
        assert!(LabeledCorpus::new(c.clone(), gt.clone()).is_ok());
        gt.insert(4, GroundTruth::new(4, "CD", "BI").unwrap());
        assert!(matches!(LabeledCorpus::new(c, gt), Err(Error::MissingLabel(4))));
    }

    #[test]
    fn reversed_ground_truth_mirrors_spans() {
        // SOD|A0 -> 0A|DOS
        let gt = GroundTruth::new(0, "SODA0", "BIIBI").unwrap();
        let r = gt.reversed();
        assert_eq!(r.name, "0ADOS");
        assert_eq!(tags_to_string(&r.tags), "BIBII");
        assert_eq!(r.reversed(), gt);
    }

    fn bio_strategy() -> impl Strategy<Value = Vec<Bio>> {
        proptest::collection::vec(0u8..3, 1..24).prop_map(|raw| {
            let mut out = Vec::with_capacity(raw.len());
            for r in raw {
                let t = match r {
                    0 => Bio::B,
                    1 => Bio::I,
                    _ => Bio::O,
                };
                // repair I after O / at start
                let t = if t == Bio::I && matches!(out.last(), None | Some(Bio::O)) {
                    Bio::B
                } else {
                    t
                };
                out.push(t);
            }
            out
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[A-Z0-9_ .:-]{1,30}") {
            let once = normalize(&s).unwrap();
            prop_assert_eq!(normalize(&once).unwrap(), once.clone());
            prop_assert_eq!(once.chars().count(), s.chars().count());
            prop_assert!(once.chars().all(|c| !c.is_ascii_digit() || c == '0'));
        }

        #[test]
        fn vocabulary_round_trips(names in proptest::collection::vec("[a-zA-Z0-9_ ]{1,12}", 1..8)) {
            let c = Corpus::from_names(&names).unwrap();
            let v = c.vocabulary();
            for n in c.names() {
                for &ch in &n.normalized {
                    let id = v.id(ch).unwrap();
                    prop_assert!(id != Vocabulary::START);
                    prop_assert_eq!(v.symbol(id), Some(ch));
                }
            }
        }

        #[test]
        fn bio_spans_round_trip(tags in bio_strategy()) {
            let tag_string = tags_to_string(&tags);
            prop_assert_eq!(parse_bio(&tag_string).unwrap(), tags.clone());
            let spans = bio_to_spans(&tags);
            prop_assert_eq!(spans_to_bio(&spans, tags.len()), tags);
        }
    }
}
