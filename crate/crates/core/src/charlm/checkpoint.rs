//! Binary formats for the language model checkpoint and the hidden-state
//! sidecar.
//!
//! LM checkpoint, all integers and floats little-endian:
//!
//! ```text
//! magic       8 bytes  "SSEGLMCK"
//! version     u32      1
//! direction   u8       0 forward, 1 backward
//! vocab_size  u32      |V| including the start symbol
//! embed_dim   u32      E
//! hidden_dim  u32      H
//! embedding        f64 x |V|*E        row-major
//! gate_weights     f64 x 4H*(E+H)     row-major, gates i, f, g, o
//! gate_bias        f64 x 4H
//! output_weights   f64 x |V|*H        row-major
//! output_bias      f64 x |V|
//! symbol_count     u32      |V| - 1
//! symbols          symbol_count x (u32 byte length, UTF-8)   ids 1.. in order
//! ```
//!
//! Hidden-state sidecar:
//!
//! ```text
//! magic     8 bytes  "SSEGHIDN"
//! version   u32      1
//! lm_hash   u32 length + UTF-8 hex digest of the LM checkpoint
//! count     u64
//! dim       u32
//! count x (name_id u64, position u64, dim x f64)
//! ```

use ndarray::Array2;

use super::lstm::LmParams;
use super::{Direction, LanguageModel, TransitionRecord};
use crate::artifact::{Reader, Writer};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

const LM_MAGIC: &[u8; 8] = b"SSEGLMCK";
const HIDDEN_MAGIC: &[u8; 8] = b"SSEGHIDN";
const VERSION: u32 = 1;

pub(super) fn encode_lm(model: &LanguageModel) -> Vec<u8> {
    let p = &model.params;
    let mut w = Writer::new();
    w.bytes(LM_MAGIC);
    w.u32(VERSION);
    w.u8(match model.direction {
        Direction::Forward => 0,
        Direction::Backward => 1,
    });
    w.u32(p.vocab_size() as u32);
    w.u32(p.embedding_dim() as u32);
    w.u32(p.hidden_dim() as u32);
    for t in p.tensors() {
        w.f64s(t);
    }
    let symbols = model.vocabulary.chars();
    w.u32(symbols.len() as u32);
    let mut buf = [0u8; 4];
    for c in symbols {
        w.string(c.encode_utf8(&mut buf));
    }
    w.finish()
}

pub(super) fn decode_lm(bytes: &[u8]) -> Result<LanguageModel> {
    let mut r = Reader::new(bytes);
    r.expect_magic(LM_MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported LM checkpoint version {version}")));
    }
    let direction = match r.u8()? {
        0 => Direction::Forward,
        1 => Direction::Backward,
        d => return Err(Error::Format(format!("bad direction byte {d}"))),
    };
    let v = r.u32()? as usize;
    let e = r.u32()? as usize;
    let h = r.u32()? as usize;
    if v == 0 || e == 0 || h == 0 {
        return Err(Error::Format("zero dimension in LM header".into()));
    }
    let mut params = LmParams::zeros(v, e, h);
    for t in params.tensors_mut() {
        r.f64s_into(t)?;
    }
    let count = r.u32()? as usize;
    if count + 1 != v {
        return Err(Error::Format(format!(
            "vocabulary lists {count} symbols but header says {v}"
        )));
    }
    let mut symbols = Vec::with_capacity(count);
    for _ in 0..count {
        let s = r.string()?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => symbols.push(c),
            _ => return Err(Error::Format(format!("vocabulary entry {s:?} is not one character"))),
        }
    }
    r.finish()?;
    let vocabulary = Vocabulary::from_chars(symbols.iter().copied());
    if vocabulary.chars() != symbols.as_slice() {
        return Err(Error::Format("vocabulary symbols not in canonical order".into()));
    }
    if !params.is_finite() {
        return Err(Error::Format("non-finite LM parameter".into()));
    }
    Ok(LanguageModel {
        vocabulary,
        params,
        direction,
    })
}

/// Hidden states aligned row-for-row with a transition list.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStates {
    pub lm_hash: String,
    /// `(name_id, position)` per row
    pub keys: Vec<(usize, usize)>,
    pub values: Array2<f64>,
}

impl HiddenStates {
    pub fn from_records(lm_hash: &str, records: &[TransitionRecord]) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.hidden.len());
        let mut values = Array2::zeros((records.len(), dim));
        let mut keys = Vec::with_capacity(records.len());
        for (k, r) in records.iter().enumerate() {
            if r.hidden.len() != dim {
                return Err(Error::ModelMismatch(format!(
                    "hidden state of length {} in a set of dim {dim}",
                    r.hidden.len()
                )));
            }
            values.row_mut(k).assign(&ndarray::ArrayView1::from(r.hidden.as_slice()));
            keys.push((r.name_id, r.position));
        }
        Ok(Self {
            lm_hash: lm_hash.to_string(),
            keys,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

pub fn write_hidden_states(states: &HiddenStates) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(HIDDEN_MAGIC);
    w.u32(VERSION);
    w.string(&states.lm_hash);
    w.u64(states.len() as u64);
    w.u32(states.dim() as u32);
    for (k, &(id, pos)) in states.keys.iter().enumerate() {
        w.u64(id as u64);
        w.u64(pos as u64);
        w.f64s(states.values.row(k).as_slice().expect("standard layout"));
    }
    w.finish()
}

pub fn read_hidden_states(bytes: &[u8]) -> Result<HiddenStates> {
    let mut r = Reader::new(bytes);
    r.expect_magic(HIDDEN_MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported hidden-state version {version}")));
    }
    let lm_hash = r.string()?;
    let count = r.u64()? as usize;
    let dim = r.u32()? as usize;
    let mut keys = Vec::with_capacity(count);
    let mut values = Array2::zeros((count, dim));
    for k in 0..count {
        let id = r.u64()? as usize;
        let pos = r.u64()? as usize;
        keys.push((id, pos));
        r.f64s_into(values.row_mut(k).as_slice_mut().expect("standard layout"))?;
    }
    r.finish()?;
    Ok(HiddenStates {
        lm_hash,
        keys,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> LanguageModel {
        let corpus = Corpus::from_names(&["AB_C0", "é x"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        LanguageModel {
            vocabulary: corpus.vocabulary().clone(),
            params: LmParams::init(corpus.vocabulary().len(), 3, 5, &mut rng),
            direction: Direction::Backward,
        }
    }

    #[test]
    fn lm_checkpoint_round_trips() {
        let m = model();
        let bytes = encode_lm(&m);
        let back = decode_lm(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_lm(&back), bytes);
    }

    #[test]
    fn lm_checkpoint_layout() {
        let m = model();
        let bytes = encode_lm(&m);
        assert_eq!(&bytes[..8], b"SSEGLMCK");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(bytes[12], 1);
        let v = m.vocabulary.len();
        assert_eq!(u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize, v);
        // first embedding weight follows the 25-byte header
        let first = f64::from_le_bytes(bytes[25..33].try_into().unwrap());
        assert_eq!(first, m.params.embedding[[0, 0]]);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let bytes = encode_lm(&model());
        assert!(decode_lm(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_lm(&bad).is_err());
    }

    #[test]
    fn hidden_states_round_trip() {
        let m = model();
        let corpus = Corpus::from_names(&["AB_C0", "é x"]).unwrap();
        let recs = m.transitions(&corpus).unwrap();
        let hs = HiddenStates::from_records(&m.content_hash(), &recs).unwrap();
        assert_eq!(hs.len(), 6);
        let back = read_hidden_states(&write_hidden_states(&hs)).unwrap();
        assert_eq!(back, hs);
    }
}
